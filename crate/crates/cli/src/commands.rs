//! One function per subcommand. Each writes its data files into the output
//! directory and reports what it wrote; `run` adds the manifest.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use nvcav::analysis::{
    second_order_single_photon, single_excitation_eigenvalues, spectrum_of_series,
};
use nvcav::hbt::HBTConfig;
use nvcav::io::{
    fmt_f64, write_columns, write_csv_file, write_json, write_jumps, CsvMeta, JumpRow,
};
use nvcav::mcsolve::ground_ket;
use nvcav::mesolve::ground_state;
use nvcav::model::config::{model_hash, parse_model, LoadedModel};
use nvcav::units::Dimension;
use nvcav::{
    channel_resolved_sweep, closed_form_stats, ensemble_average, integrate, overall_damping_rate,
    pulse_param_sweep, purcell_factor, simulate_hbt, IntegratorConfig, PumpPulse,
    SpectrumConvention, SystemModel,
};

use crate::error::CliError;
use crate::manifest::RunManifest;
use crate::settings::{number, optional, parse_experiments, quantity, ExperimentFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Sweep,
    Emit,
    Channels,
    Hbt,
    Analytic,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Sweep => "sweep",
            Command::Emit => "emit",
            Command::Channels => "channels",
            Command::Hbt => "hbt",
            Command::Analytic => "analytic",
        }
    }

    pub fn from_name(s: &str) -> Result<Self, CliError> {
        Ok(match s {
            "sweep" => Command::Sweep,
            "emit" => Command::Emit,
            "channels" => Command::Channels,
            "hbt" => Command::Hbt,
            "analytic" => Command::Analytic,
            other => {
                return Err(CliError::Config(format!(
                    "unknown subcommand `{other}` in manifest"
                )))
            }
        })
    }
}

pub struct RunContext {
    pub config_path: String,
    pub config_text: String,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub long_mode: bool,
}

struct Outcome {
    seeds: Vec<u64>,
    resolved: serde_json::Value,
    outputs: Vec<String>,
}

struct Env<'a> {
    ctx: &'a RunContext,
    loaded: LoadedModel,
    exp: ExperimentFile,
    hash: String,
    outputs: Vec<String>,
}

impl Env<'_> {
    fn model(&self) -> &SystemModel {
        &self.loaded.model
    }

    fn meta(&self) -> CsvMeta {
        CsvMeta::new(self.hash.clone(), self.ctx.config_text.clone())
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.ctx.out.join(name)
    }

    fn finish(self, seeds: Vec<u64>, resolved: serde_json::Value) -> Outcome {
        Outcome {
            seeds,
            resolved,
            outputs: self.outputs,
        }
    }
}

/// Parse the config text, run `cmd` and write its manifest.
pub fn run(cmd: Command, ctx: &RunContext) -> Result<RunManifest, CliError> {
    let loaded = parse_model(&ctx.config_text)?;
    let exp = parse_experiments(&ctx.config_text)?;
    std::fs::create_dir_all(&ctx.out)?;
    let env = Env {
        ctx,
        hash: model_hash(&loaded.model),
        loaded,
        exp,
        outputs: Vec::new(),
    };
    let hash = env.hash.clone();
    let model = env.model().clone();
    let outcome = match cmd {
        Command::Sweep => sweep(env),
        Command::Emit => emit(env),
        Command::Channels => channels(env),
        Command::Hbt => hbt(env),
        Command::Analytic => analytic(env),
    }?;
    let mut outputs = outcome.outputs;
    outputs.push(crate::manifest::MANIFEST_FILE.to_string());
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        subcommand: cmd.name().to_string(),
        config_path: ctx.config_path.clone(),
        config_text: ctx.config_text.clone(),
        model_hash: hash,
        seed_override: ctx.seed,
        seeds: outcome.seeds,
        long_mode: ctx.long_mode,
        threads: ctx.threads,
        resolved: json!({ "model": model, "experiment": outcome.resolved }),
        outputs,
    };
    manifest.write(&ctx.out)?;
    Ok(manifest)
}

/// Matrix element of the cavity-resonant coupling.
fn resonant_omega(model: &SystemModel) -> f64 {
    model.coupling.omegas[model.cavity.resonant_transition] * model.coupling.convention.prefactor()
}

fn sweep(mut env: Env) -> Result<Outcome, CliError> {
    let sec = env.exp.sweep.clone().unwrap_or_default();
    let ts = sec.widths.resolve("widths", quantity(Dimension::Time))?;
    let rs = sec.rates.resolve("rates", quantity(Dimension::Rate))?;
    let omega = optional(&sec.omega, Dimension::AngularFrequency)?
        .unwrap_or_else(|| resonant_omega(env.model()));
    let res = pulse_param_sweep(&ts, &rs, omega)?;
    let op = res.operating_point;
    let meta = env.meta().with("omega_rad_per_s", fmt_f64(omega)).with(
        "operating_point",
        format!(
            "T_s={} r0_hz={} P0={} P1={} Pmulti={} nbar={}",
            fmt_f64(op.t),
            fmt_f64(op.r0),
            fmt_f64(op.stats.p0),
            fmt_f64(op.stats.p1),
            fmt_f64(op.stats.p_multi),
            fmt_f64(op.stats.n_bar)
        ),
    );
    let rows = res.points.iter().map(|p| {
        [
            p.t,
            p.r0,
            p.stats.p0,
            p.stats.p1,
            p.stats.p_multi,
            p.stats.n_bar,
        ]
        .map(fmt_f64)
        .to_vec()
    });
    let path = env.path("sweep.csv");
    write_csv_file(
        &path,
        &meta,
        &["T_s", "r0_hz", "P0", "P1", "Pmulti", "nbar"],
        rows,
    )?;
    let summary = json!({
        "omega_rad_per_s": omega,
        "rows": res.points.len(),
        "operating_point": op,
        "operating_point_second_order_P1": second_order_single_photon(op.r0, op.t, omega),
    });
    let path = env.path("sweep_summary.json");
    write_json(&path, &summary)?;
    Ok(env.finish(
        Vec::new(),
        json!({ "widths_s": ts, "rates_hz": rs, "omega_rad_per_s": omega }),
    ))
}

#[derive(Serialize)]
struct EmitResolved {
    t_final_s: f64,
    integrator: IntegratorConfig,
    spectrum_convention: SpectrumConvention,
    trajectories: usize,
    trajectory_cavity: usize,
    trajectory_waveguide: usize,
    trajectory_record_dt_s: f64,
    seed: u64,
}

fn emit(mut env: Env) -> Result<Outcome, CliError> {
    let sec = env.exp.emit.clone().unwrap_or_default();
    let model = env.model().clone();
    let t_final = quantity(Dimension::Time)(&sec.t_final)?;
    let record_dt = quantity(Dimension::Time)(&sec.record_dt)?;
    let traj_dt = quantity(Dimension::Time)(&sec.trajectory_record_dt)?;
    let base = IntegratorConfig::default();
    let integrator = IntegratorConfig {
        method: sec.method,
        rel_tol: sec.rel_tol.unwrap_or(base.rel_tol),
        abs_tol: sec.abs_tol.unwrap_or(base.abs_tol),
        max_step: base.max_step.min(record_dt),
        record_dt,
        ..base
    };
    let resolved = EmitResolved {
        t_final_s: t_final,
        integrator: integrator.clone(),
        spectrum_convention: sec.spectrum_convention,
        trajectories: sec.trajectories,
        trajectory_cavity: sec.trajectory_cavity.unwrap_or(model.truncation.n_cavity),
        trajectory_waveguide: sec.trajectory_waveguide.unwrap_or(0),
        trajectory_record_dt_s: traj_dt,
        seed: env.ctx.seed.or(sec.seed).unwrap_or(1),
    };
    if t_final.is_nan() || t_final <= 0.0 {
        return Err(CliError::Config("emit.t_final must be positive".into()));
    }

    let r = integrate(&model, &ground_state(&model)?, t_final, &integrator)?;
    let mut names = vec!["time_s".to_string()];
    let mut cols: Vec<&[f64]> = vec![&r.times];
    for (k, v) in &r.populations {
        names.push(k.clone());
        cols.push(v);
    }
    names.push("intensity_per_s".into());
    cols.push(&r.intensity);
    for (tag, v) in &r.channel_flux {
        names.push(format!("flux:{tag}"));
        cols.push(v);
    }
    let names_ref: Vec<&str> = names.iter().map(String::as_str).collect();
    let path = env.path("emission.csv");
    write_columns(&path, &env.meta(), &names_ref, &cols)?;

    let path = env.path("channel_integrals.csv");
    write_csv_file(
        &path,
        &env.meta(),
        &["channel_tag", "probability"],
        r.channel_integrals
            .iter()
            .map(|(t, v)| vec![t.to_string(), fmt_f64(*v)]),
    )?;

    let (ipk, peak) =
        r.intensity
            .iter()
            .enumerate()
            .fold((0, 0.0), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
    let lambda = model.cavity.wavelength;
    let mut spectrum_summary = serde_json::Value::Null;
    if peak > 0.0 {
        let conv = sec.spectrum_convention;
        let other = match conv {
            SpectrumConvention::Intensity => SpectrumConvention::Amplitude,
            SpectrumConvention::Amplitude => SpectrumConvention::Intensity,
        };
        let s = spectrum_of_series(&r.times, &r.intensity, lambda, conv)?;
        let alt = spectrum_of_series(&r.times, &r.intensity, lambda, other)?;
        // keep the figure-relevant window around the line
        let window = 50.0 * s.fwhm_frequency;
        let rows = s
            .frequencies
            .iter()
            .zip(&s.power)
            .filter(|(f, _)| f.abs() <= window)
            .map(|(f, p)| vec![fmt_f64(*f), fmt_f64(*p)]);
        let meta = env
            .meta()
            .with("convention", json!(conv).as_str().unwrap_or_default())
            .with("center_wavelength_m", fmt_f64(lambda))
            .with("fwhm_hz", fmt_f64(s.fwhm_frequency))
            .with("fwhm_nm", fmt_f64(s.fwhm_wavelength * 1e9));
        let path = env.path("spectrum.csv");
        write_csv_file(&path, &meta, &["freq_hz", "power"], rows)?;
        spectrum_summary = json!({
            "convention": conv,
            "fwhm_hz": s.fwhm_frequency,
            "fwhm_nm": s.fwhm_wavelength * 1e9,
            "other_convention": other,
            "other_fwhm_hz": alt.fwhm_frequency,
            "other_fwhm_nm": alt.fwhm_wavelength * 1e9,
        });
    } else {
        log::warn!("emission intensity is identically zero; no spectrum written");
    }

    let mut overlay = serde_json::Value::Null;
    let mut seeds = Vec::new();
    if sec.trajectories > 0 {
        let mut tm = model.clone();
        tm.truncation.n_cavity = resolved.trajectory_cavity;
        tm.truncation.n_waveguide = resolved.trajectory_waveguide;
        tm.validate()?;
        let ens = ensemble_average(
            &tm,
            &ground_ket(&tm)?,
            t_final,
            sec.trajectories,
            resolved.seed,
            traj_dt,
        )?;
        seeds.push(resolved.seed);
        let flux = &ens.mean["cavity_flux"];
        let se = &ens.std_err["cavity_flux"];
        let me: Vec<f64> = ens
            .times
            .iter()
            .map(|&t| interpolate(&r.times, &r.intensity, t))
            .collect();
        let ok: Vec<bool> = flux
            .iter()
            .zip(se)
            .zip(&me)
            .map(|((f, s), m)| (*f - *m).abs() <= 3.0 * *s + 1e-9 * peak)
            .collect();
        let within = ok.iter().filter(|&&b| b).count();
        // past the point where fewer than one trajectory is expected to emit
        // later, the sample standard error is zero and says nothing
        let mut remaining = vec![0.0; r.times.len()];
        for i in (0..r.times.len().saturating_sub(1)).rev() {
            remaining[i] = remaining[i + 1]
                + 0.5 * (r.intensity[i] + r.intensity[i + 1]) * (r.times[i + 1] - r.times[i]);
        }
        let total = remaining.first().copied().unwrap_or(0.0);
        let resolvable: Vec<usize> = (0..ens.times.len())
            .filter(|&k| {
                interpolate(&r.times, &remaining, ens.times[k]) * sec.trajectories as f64 >= total
            })
            .collect();
        let within_resolvable = resolvable.iter().filter(|&&k| ok[k]).count();
        let path = env.path("trajectory_overlay.csv");
        write_columns(
            &path,
            &env.meta()
                .with("n_traj", sec.trajectories)
                .with("seed", resolved.seed),
            &[
                "time_s",
                "traj_cavity_flux_per_s",
                "traj_cavity_flux_std_err",
                "mesolve_intensity_per_s",
                "traj_sigma_ee",
                "traj_sigma_ee_std_err",
            ],
            &[
                &ens.times,
                flux,
                se,
                &me,
                &ens.mean["sigma_ee"],
                &ens.std_err["sigma_ee"],
            ],
        )?;
        let path = env.path("jumps.csv");
        write_jumps(
            std::fs::File::create(&path)?,
            &env.meta().with("seed", resolved.seed),
            &JumpRow::from_records(&ens.records),
        )?;
        overlay = json!({
            "n_traj": sec.trajectories,
            "seed": resolved.seed,
            "samples": ens.times.len(),
            "fraction_within_3se": within as f64 / ens.times.len() as f64,
            "resolvable_samples": resolvable.len(),
            "resolvable_until_s": resolvable.last().map(|&k| ens.times[k]),
            "fraction_within_3se_resolvable": within_resolvable as f64 / resolvable.len().max(1) as f64,
        });
    }

    let summary = json!({
        "integral_ww": r.integral_ww,
        "mean_emission_time_s": finite(r.mean_emission_time),
        "peak_time_s": if peak > 0.0 { Some(r.times[ipk]) } else { None },
        "peak_intensity_per_s": peak,
        "channel_integrals": r.channel_integrals,
        "spectrum": spectrum_summary,
        "invariants": r.invariants,
        "steps": r.steps,
        "rejected_steps": r.rejected_steps,
        "trajectory_overlay": overlay,
    });
    let path = env.path("summary.json");
    write_json(&path, &summary)?;
    Ok(env.finish(seeds, serde_json::to_value(&resolved)?))
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn interpolate(t: &[f64], y: &[f64], x: f64) -> f64 {
    match t.binary_search_by(|v| v.total_cmp(&x)) {
        Ok(i) => y[i],
        Err(0) => y[0],
        Err(i) if i >= t.len() => y[t.len() - 1],
        Err(i) => {
            let w = (x - t[i - 1]) / (t[i] - t[i - 1]);
            y[i - 1] + w * (y[i] - y[i - 1])
        }
    }
}

fn channels(mut env: Env) -> Result<Outcome, CliError> {
    if !env.loaded.has_branching {
        return Err(CliError::Config(
            "channels needs a branching table: add `branching = [...]` and `ground_offsets = [...]` to [levels] \
             (mark it `illustrative = true` if the ratios are not measured)"
                .into(),
        ));
    }
    let sec = env.exp.channels.clone().unwrap_or_default();
    let qs = sec.q.resolve("q", number)?;
    let points = channel_resolved_sweep(env.model(), &qs)?;
    let radiative: Vec<usize> = points[0].radiative().keys().copied().collect();
    let mut columns = vec!["q".to_string(), "kappa_per_s".into(), "cavity".into()];
    columns.extend(radiative.iter().map(|j| format!("radiative:{j}PL")));
    columns.push("total".into());
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            let rad = p.radiative();
            let mut row = vec![fmt_f64(p.q), fmt_f64(p.kappa), fmt_f64(p.cavity())];
            row.extend(
                radiative
                    .iter()
                    .map(|j| fmt_f64(rad.get(j).copied().unwrap_or(0.0))),
            );
            row.push(fmt_f64(p.total));
            row
        })
        .collect();
    let meta = env
        .meta()
        .with(
            "branching",
            format!("{:?}", env.model().scheme.branching_ratios()),
        )
        .with("illustrative_branching", env.loaded.illustrative_branching);
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    let path = env.path("channels.csv");
    write_csv_file(&path, &meta, &cols, rows)?;
    Ok(env.finish(Vec::new(), json!({ "q": qs })))
}

fn hbt(mut env: Env) -> Result<Outcome, CliError> {
    let sec = env.exp.hbt.clone().unwrap_or_default();
    let model = env.model().clone();
    let rep_rate = optional(&sec.rep_rate, Dimension::Rate)?
        .or(model.pump.rep_period.map(|p| 1.0 / p))
        .ok_or_else(|| {
            CliError::Config(
                "hbt needs a repetition rate: set [hbt].rep_rate or [pump].rep_rate".into(),
            )
        })?;
    let total = if env.ctx.long_mode {
        &sec.long_total_time
    } else {
        &sec.total_time
    };
    let seed = env.ctx.seed.or(sec.seed).unwrap_or(1);
    let cfg = HBTConfig {
        bin_width: quantity(Dimension::Time)(&sec.bin_width)?,
        splitter_ratio: sec.splitter_ratio,
        n_side_peaks: sec.n_side_peaks,
        efficiency: sec.efficiency,
        dark_count_rate: optional(&sec.dark_count_rate, Dimension::Rate)?.unwrap_or(0.0),
        ..HBTConfig::new(rep_rate, quantity(Dimension::Time)(total)?, seed)
    };
    let scan = sec.widths.is_some();
    let widths = match &sec.widths {
        Some(w) => w
            .iter()
            .map(quantity(Dimension::Time))
            .collect::<Result<Vec<_>, _>>()?,
        None => vec![model.pump.width],
    };
    if widths.is_empty() {
        return Err(CliError::Usage("hbt.widths is empty".into()));
    }

    let mut runs = Vec::new();
    for (idx, &width) in widths.iter().enumerate() {
        let m = model.clone().with_pump(PumpPulse {
            width,
            ..model.pump
        });
        let res = simulate_hbt(&m, &cfg)?;
        let suffix = if scan {
            format!("_{idx}")
        } else {
            String::new()
        };
        let h = &res.histogram;
        let meta = env
            .meta()
            .with("seed", seed)
            .with("width_s", fmt_f64(width))
            .with("n_periods", res.n_periods)
            .with(
                "zero_delay_ratio",
                h.zero_delay_ratio.map_or("none".into(), fmt_f64),
            );
        let path = env.path(&format!("histogram{suffix}.csv"));
        write_csv_file(
            &path,
            &meta,
            &["delay_s", "counts"],
            h.delays
                .iter()
                .zip(&h.counts)
                .map(|(d, c)| vec![fmt_f64(*d), c.to_string()]),
        )?;
        let rows: Vec<JumpRow> = res
            .jumps
            .iter()
            .map(|j| JumpRow {
                traj_index: 0,
                seed,
                t_jump_s: j.time,
                channel_tag: j.tag,
            })
            .collect();
        let path = env.path(&format!("jumps{suffix}.csv"));
        write_jumps(std::fs::File::create(&path)?, &meta, &rows)?;
        let pt = &res.per_trigger;
        runs.push(json!({
            "width_s": width,
            "n_periods": res.n_periods,
            "per_trigger_counts": pt.counts,
            "per_trigger_probability": (0..pt.counts.len()).map(|k| pt.probability(k)).collect::<Vec<_>>(),
            "p1_std_err": pt.std_err(1),
            "multi_photon_events": pt.multi_count(),
            "stats": res.stats,
            "zero_delay_ratio": h.zero_delay_ratio,
            "peak_areas": h.peak_areas,
            "coincidences": h.total(),
            "detections_a": res.detections_a.len(),
            "detections_b": res.detections_b.len(),
            "warnings": res.warnings,
        }));
    }
    let summary = json!({ "seed": seed, "config": cfg, "runs": runs });
    let path = env.path("hbt_summary.json");
    write_json(&path, &summary)?;
    Ok(env.finish(vec![seed], json!({ "hbt": cfg, "widths_s": widths })))
}

fn analytic(mut env: Env) -> Result<Outcome, CliError> {
    let sec = env.exp.analytic.clone().unwrap_or_default();
    let model = env.model().clone();
    let omega0 = resonant_omega(&model);
    let g01 = optional(&sec.gamma_g0g1, Dimension::Rate)?.unwrap_or(0.0);
    let gmn = optional(&sec.gamma_gmgn, Dimension::Rate)?
        .unwrap_or_else(|| model.scheme.phonon_rates.first().copied().unwrap_or(0.0));
    let purcell = purcell_factor(&model.cavity)?;
    let damping = overall_damping_rate(g01, gmn, omega0, model.cavity.omega(), model.cavity.q)?;
    let pump = model.pump;
    let stats = closed_form_stats(pump.r0, pump.width, omega0)?;
    let slowest = single_excitation_eigenvalues(&model)?
        .iter()
        .map(|z| -z.re)
        .fold(f64::INFINITY, f64::min);
    let summary = json!({
        "kappa_per_s": model.kappa(),
        "omega0_rad_per_s": omega0,
        "purcell_factor": purcell.factor,
        "beta": purcell.beta,
        "gamma_g0g1_per_s": g01,
        "gamma_gmgn_per_s": gmn,
        "overall_damping_rate_per_s": damping,
        "slowest_amplitude_decay_per_s": slowest,
        "damping_relative_gap": (damping - slowest).abs() / slowest,
        "pump": { "r0_hz": pump.r0, "width_s": pump.width },
        "photon_stats": stats,
    });
    let path = env.path("analytic.json");
    write_json(&path, &summary)?;
    Ok(env.finish(Vec::new(), json!({ "gamma_g0g1": g01, "gamma_gmgn": gmn })))
}

/// Read the config for a fresh run.
pub fn read_config(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
