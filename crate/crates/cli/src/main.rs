use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod error;
mod manifest;
mod settings;

use commands::{read_config, run, Command, RunContext};
use error::CliError;
use manifest::RunManifest;

#[derive(Parser, Debug)]
#[command(
    name = "nvcav",
    version,
    about = "Cavity-coupled NV-centre single-photon source simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,

    /// Run file with the model tables and experiment sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Overrides the seed given in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for sweeps and ensembles.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Use the long HBT horizon (`long_total_time`).
    #[arg(long, global = true)]
    long_mode: bool,
}

#[derive(Subcommand, Debug)]
enum Sub {
    /// Closed-form photon statistics over a pulse-width × absorption-rate grid.
    Sweep,
    /// Master-equation emission run with spectrum and optional trajectory overlay.
    Emit,
    /// Channel-resolved emission probabilities versus cavity Q.
    Channels,
    /// Pulse-train HBT coincidence simulation.
    Hbt,
    /// Point evaluations of the Purcell factor, damping rate and photon statistics.
    Analytic,
    /// Repeat a run from its manifest.
    Rerun {
        /// Path to a manifest.json.
        manifest: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(m) => {
            for o in &m.outputs {
                println!("wrote {o}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: Cli) -> Result<RunManifest, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let (cmd, ctx) = match cli.command {
        Sub::Rerun { manifest } => {
            let m = RunManifest::read(&manifest)?;
            let ctx = RunContext {
                config_path: m.config_path,
                config_text: m.config_text,
                out: cli.out,
                seed: m.seed_override,
                threads: cli.threads.or(m.threads),
                long_mode: m.long_mode,
            };
            (Command::from_name(&m.subcommand)?, ctx)
        }
        sub => {
            let path = cli
                .config
                .ok_or_else(|| CliError::Usage("--config <path> is required".into()))?;
            let cmd = match sub {
                Sub::Sweep => Command::Sweep,
                Sub::Emit => Command::Emit,
                Sub::Channels => Command::Channels,
                Sub::Hbt => Command::Hbt,
                Sub::Analytic => Command::Analytic,
                Sub::Rerun { .. } => unreachable!(),
            };
            let ctx = RunContext {
                config_text: read_config(&path)?,
                config_path: path.display().to_string(),
                out: cli.out,
                seed: cli.seed,
                threads: cli.threads,
                long_mode: cli.long_mode,
            };
            (cmd, ctx)
        }
    };
    run(cmd, &ctx)
}
