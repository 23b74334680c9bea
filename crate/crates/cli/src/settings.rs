//! Experiment sections of a run file.
//!
//! These sit next to the model tables (`[levels]`, `[cavity]`, ...) in the
//! same TOML file:
//!
//! ```toml
//! [sweep]
//! widths = { from = "0.1 ps", to = "10 ps", points = 41 }
//! rates = ["1e11 Hz", "1e12 Hz", "1e13 Hz"]
//!
//! [hbt]
//! rep_rate = "1 GHz"
//! total_time = "5 us"
//! ```

use serde::{Deserialize, Serialize};

use nvcav::mesolve::Method;
use nvcav::units::{parse_quantity, Dimension};
use nvcav::SpectrumConvention;

use crate::error::CliError;

#[derive(Debug, Clone, Default, Deserialize)]
pub struct ExperimentFile {
    #[serde(default)]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub emit: Option<EmitSection>,
    #[serde(default)]
    pub channels: Option<ChannelsSection>,
    #[serde(default)]
    pub hbt: Option<HbtSection>,
    #[serde(default)]
    pub analytic: Option<AnalyticSection>,
}

pub fn parse_experiments(text: &str) -> Result<ExperimentFile, CliError> {
    toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Log,
    Linear,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range<T> {
    pub from: T,
    pub to: T,
    pub points: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

/// Either an explicit list or `{ from, to, points, spacing }`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Grid<T> {
    List(Vec<T>),
    Range(Range<T>),
}

impl<T> Grid<T> {
    pub fn resolve(
        &self,
        name: &str,
        parse: impl Fn(&T) -> Result<f64, CliError>,
    ) -> Result<Vec<f64>, CliError> {
        let values = match self {
            Grid::List(v) => v.iter().map(&parse).collect::<Result<Vec<_>, _>>()?,
            Grid::Range(r) => {
                let (a, b) = (parse(&r.from)?, parse(&r.to)?);
                spaced(name, a, b, r.points, r.spacing)?
            }
        };
        if values.is_empty() {
            return Err(CliError::Usage(format!("grid `{name}` is empty")));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(CliError::Config(format!(
                "grid `{name}` contains non-finite value {bad}"
            )));
        }
        Ok(values)
    }
}

fn spaced(name: &str, a: f64, b: f64, n: usize, spacing: Spacing) -> Result<Vec<f64>, CliError> {
    match n {
        0 => Ok(Vec::new()),
        1 => Ok(vec![a]),
        _ => {
            let step = |i: usize| i as f64 / (n - 1) as f64;
            match spacing {
                Spacing::Linear => Ok((0..n).map(|i| a + (b - a) * step(i)).collect()),
                Spacing::Log => {
                    if !(a > 0.0 && b > 0.0) {
                        return Err(CliError::Config(format!(
                            "log-spaced grid `{name}` needs positive end points"
                        )));
                    }
                    let (la, lb) = (a.log10(), b.log10());
                    Ok((0..n)
                        .map(|i| 10f64.powf(la + (lb - la) * step(i)))
                        .collect())
                }
            }
        }
    }
}

pub fn quantity(dim: Dimension) -> impl Fn(&String) -> Result<f64, CliError> {
    move |s| parse_quantity(s, dim).map_err(CliError::from)
}

pub fn number(x: &f64) -> Result<f64, CliError> {
    Ok(*x)
}

pub fn optional(s: &Option<String>, dim: Dimension) -> Result<Option<f64>, CliError> {
    s.as_deref()
        .map(|s| parse_quantity(s, dim))
        .transpose()
        .map_err(CliError::from)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default = "default_widths")]
    pub widths: Grid<String>,
    #[serde(default = "default_rates")]
    pub rates: Grid<String>,
    /// Overrides the model's resonant coupling.
    #[serde(default)]
    pub omega: Option<String>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            widths: default_widths(),
            rates: default_rates(),
            omega: None,
        }
    }
}

fn default_widths() -> Grid<String> {
    Grid::Range(Range {
        from: "0.1 ps".into(),
        to: "10 ps".into(),
        points: 41,
        spacing: Spacing::Log,
    })
}

fn default_rates() -> Grid<String> {
    Grid::Range(Range {
        from: "1e11 Hz".into(),
        to: "1e14 Hz".into(),
        points: 31,
        spacing: Spacing::Log,
    })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitSection {
    #[serde(default = "default_t_final")]
    pub t_final: String,
    #[serde(default = "default_record_dt")]
    pub record_dt: String,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default)]
    pub rel_tol: Option<f64>,
    #[serde(default)]
    pub abs_tol: Option<f64>,
    #[serde(default)]
    pub spectrum_convention: SpectrumConvention,
    /// Quantum-trajectory overlay; 0 disables it.
    #[serde(default)]
    pub trajectories: usize,
    #[serde(default)]
    pub trajectory_cavity: Option<usize>,
    #[serde(default)]
    pub trajectory_waveguide: Option<usize>,
    #[serde(default = "default_traj_dt")]
    pub trajectory_record_dt: String,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for EmitSection {
    fn default() -> Self {
        toml::from_str("").expect("all emit fields have defaults")
    }
}

fn default_t_final() -> String {
    "2 ns".into()
}
fn default_record_dt() -> String {
    "1 ps".into()
}
fn default_method() -> Method {
    Method::AdaptiveRk45
}
fn default_traj_dt() -> String {
    "2 ps".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelsSection {
    #[serde(default = "default_qs")]
    pub q: Grid<f64>,
}

impl Default for ChannelsSection {
    fn default() -> Self {
        Self { q: default_qs() }
    }
}

fn default_qs() -> Grid<f64> {
    Grid::Range(Range {
        from: 1e-4,
        to: 1e8,
        points: 49,
        spacing: Spacing::Log,
    })
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HbtSection {
    /// Falls back to `[pump].rep_rate`.
    #[serde(default)]
    pub rep_rate: Option<String>,
    #[serde(default = "default_total")]
    pub total_time: String,
    /// Used instead of `total_time` under `--long-mode`.
    #[serde(default = "default_long_total")]
    pub long_total_time: String,
    #[serde(default = "default_bin")]
    pub bin_width: String,
    #[serde(default = "default_splitter")]
    pub splitter_ratio: f64,
    #[serde(default = "default_side_peaks")]
    pub n_side_peaks: usize,
    #[serde(default = "default_efficiency")]
    pub efficiency: f64,
    #[serde(default)]
    pub dark_count_rate: Option<String>,
    /// Pulse widths to scan; the model's pump width when absent.
    #[serde(default)]
    pub widths: Option<Vec<String>>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for HbtSection {
    fn default() -> Self {
        toml::from_str("").expect("all hbt fields have defaults")
    }
}

fn default_total() -> String {
    "5 us".into()
}
fn default_long_total() -> String {
    "1.5 ms".into()
}
fn default_bin() -> String {
    "10 ps".into()
}
fn default_splitter() -> f64 {
    0.5
}
fn default_side_peaks() -> usize {
    10
}
fn default_efficiency() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticSection {
    /// Phonon relaxation g₁ → g₀ entering the overall damping rate.
    #[serde(default)]
    pub gamma_g0g1: Option<String>,
    /// Dephasing-type rate between ground sublevels; defaults to the first
    /// phonon rate of the model.
    #[serde(default)]
    pub gamma_gmgn: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_grid_hits_end_points() {
        let g: Grid<f64> = Grid::Range(Range {
            from: 1.0,
            to: 1e4,
            points: 5,
            spacing: Spacing::Log,
        });
        let v = g.resolve("q", number).unwrap();
        assert_eq!(v.len(), 5);
        assert!((v[2] - 100.0).abs() < 1e-9);
        assert!((v[4] - 1e4).abs() < 1e-8);
    }

    #[test]
    fn empty_grid_is_usage_error() {
        let g: Grid<String> = Grid::List(vec![]);
        assert!(matches!(
            g.resolve("widths", quantity(Dimension::Time)),
            Err(CliError::Usage(_))
        ));
        let g: Grid<f64> = Grid::Range(Range {
            from: 1.0,
            to: 2.0,
            points: 0,
            spacing: Spacing::Linear,
        });
        assert!(matches!(g.resolve("q", number), Err(CliError::Usage(_))));
    }

    #[test]
    fn sections_parse_beside_model_tables() {
        let text = r#"
[levels]
zpl_wavelength = "638 nm"

[sweep]
widths = ["0.56 ps"]
rates = { from = "1e11 Hz", to = "1e14 Hz", points = 4, spacing = "log" }

[hbt]
rep_rate = "1 GHz"
"#;
        let f = parse_experiments(text).unwrap();
        let s = f.sweep.unwrap();
        assert_eq!(
            s.widths
                .resolve("widths", quantity(Dimension::Time))
                .unwrap(),
            vec![0.56e-12]
        );
        assert_eq!(
            s.rates
                .resolve("rates", quantity(Dimension::Rate))
                .unwrap()
                .len(),
            4
        );
        assert_eq!(f.hbt.unwrap().total_time, "5 us");
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(parse_experiments("[emit]\ntfinal = \"1 ns\"\n").is_err());
    }
}
