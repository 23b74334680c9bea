//! Hanbury Brown–Twiss coincidence simulation over a pulse train.
//!
//! One trajectory runs through the whole train so any excitation left at a
//! period boundary carries over. Each period draws from its own RNG stream
//! (`derive_seed(seed, period)`) and the jump threshold is redrawn at the
//! period start, so a period's randomness does not depend on how many draws
//! earlier periods consumed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{slowest_single_excitation_decay, PhotonStats};
use crate::error::{Error, Result};
use crate::mcsolve::{derive_seed, ground_ket, Jump, TrajectoryEngine, TrajectoryState};
use crate::model::{Frame, SystemModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HBTConfig {
    /// Pulse repetition rate (Hz).
    pub rep_rate: f64,
    /// Length of the simulated pulse train (s).
    pub total_time: f64,
    #[serde(default = "default_bin_width")]
    pub bin_width: f64,
    /// Probability that a photon goes to detector A.
    #[serde(default = "default_splitter")]
    pub splitter_ratio: f64,
    pub seed: u64,
    /// Coincidence window is ±(n_side_peaks + ½) periods.
    #[serde(default = "default_side_peaks")]
    pub n_side_peaks: usize,
    /// Detection probability per photon at either detector.
    #[serde(default = "default_efficiency")]
    pub efficiency: f64,
    /// Dark-count rate per detector (Hz).
    #[serde(default)]
    pub dark_count_rate: f64,
}

fn default_bin_width() -> f64 {
    10e-12
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

impl HBTConfig {
    pub fn new(rep_rate: f64, total_time: f64, seed: u64) -> Self {
        Self {
            rep_rate,
            total_time,
            bin_width: default_bin_width(),
            splitter_ratio: default_splitter(),
            seed,
            n_side_peaks: default_side_peaks(),
            efficiency: default_efficiency(),
            dark_count_rate: 0.0,
        }
    }

    pub fn period(&self) -> f64 {
        1.0 / self.rep_rate
    }

    /// Whole periods in `total_time`.
    pub fn n_periods(&self) -> u64 {
        (self.total_time * self.rep_rate * (1.0 + 1e-12)).floor() as u64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rep_rate > 0.0) || !self.rep_rate.is_finite() {
            return Err(Error::invalid("rep_rate", "must be positive"));
        }
        if !(self.bin_width > 0.0) {
            return Err(Error::invalid("bin_width", "must be positive"));
        }
        if !(self.splitter_ratio > 0.0 && self.splitter_ratio < 1.0) {
            return Err(Error::invalid(
                "splitter_ratio",
                "must lie strictly between 0 and 1",
            ));
        }
        if !(self.total_time.is_finite()) || self.n_periods() == 0 {
            return Err(Error::invalid(
                "total_time",
                "must cover at least one repetition period",
            ));
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err(Error::invalid("efficiency", "must lie in (0, 1]"));
        }
        if !(self.dark_count_rate >= 0.0) || !self.dark_count_rate.is_finite() {
            return Err(Error::invalid(
                "dark_count_rate",
                "must be finite and non-negative",
            ));
        }
        if self.n_side_peaks == 0 {
            return Err(Error::invalid(
                "n_side_peaks",
                "need at least one side peak",
            ));
        }
        Ok(())
    }
}

/// A–B delay histogram (τ = t_B − t_A).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationHistogram {
    /// Bin centres k·bin_width, symmetric about zero.
    pub delays: Vec<f64>,
    pub counts: Vec<u64>,
    /// Pair counts per peak, index n_side_peaks being zero delay. A pair
    /// belongs to peak k when |τ − kP| < P/2.
    pub peak_areas: Vec<u64>,
    /// Zero-delay area over the mean side-peak area; `None` without side counts.
    pub zero_delay_ratio: Option<f64>,
}

impl CorrelationHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Empirical distribution of emitted photons per pulse.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhotonNumberDistribution {
    pub n_periods: u64,
    /// counts[k] = periods with exactly k photons.
    pub counts: Vec<u64>,
}

impl PhotonNumberDistribution {
    pub fn probability(&self, k: usize) -> f64 {
        self.counts.get(k).copied().unwrap_or(0) as f64 / self.n_periods as f64
    }

    /// Binomial standard error of `probability(k)`.
    pub fn std_err(&self, k: usize) -> f64 {
        let p = self.probability(k);
        (p * (1.0 - p) / self.n_periods as f64).sqrt()
    }

    /// Periods with two or more photons.
    pub fn multi_count(&self) -> u64 {
        self.counts.iter().skip(2).sum()
    }

    pub fn multi_fraction(&self) -> f64 {
        self.multi_count() as f64 / self.n_periods as f64
    }

    pub fn mean(&self) -> f64 {
        self.counts
            .iter()
            .enumerate()
            .map(|(k, c)| k as f64 * *c as f64)
            .sum::<f64>()
            / self.n_periods as f64
    }

    pub fn to_stats(&self) -> PhotonStats {
        PhotonStats {
            p0: self.probability(0),
            p1: self.probability(1),
            p_multi: self.multi_fraction(),
            n_bar: self.mean(),
        }
    }
}

/// Counts cavity-emission jumps per period of length `rep_period`. Jumps at
/// or beyond `n_periods · rep_period` are ignored.
pub fn photon_number_per_trigger<'a>(
    jumps: impl IntoIterator<Item = &'a Jump>,
    rep_period: f64,
    n_periods: u64,
) -> PhotonNumberDistribution {
    let mut per = vec![0u32; n_periods as usize];
    for j in jumps {
        if !j.tag.is_cavity_emission() || j.time < 0.0 {
            continue;
        }
        let k = (j.time / rep_period).floor() as u64;
        if k < n_periods {
            per[k as usize] += 1;
        }
    }
    let mut counts = vec![0u64; 1];
    for c in per {
        let c = c as usize;
        if c >= counts.len() {
            counts.resize(c + 1, 0);
        }
        counts[c] += 1;
    }
    PhotonNumberDistribution { n_periods, counts }
}

/// Histogram of all A–B pairs within ±(n_side_peaks + ½)·period. Both
/// inputs must be sorted.
pub fn correlate(
    a: &[f64],
    b: &[f64],
    period: f64,
    bin_width: f64,
    n_side_peaks: usize,
) -> CorrelationHistogram {
    let window = (n_side_peaks as f64 + 0.5) * period;
    let half_bins = (window / bin_width).ceil() as i64;
    let nbins = (2 * half_bins + 1) as usize;
    let delays = (-half_bins..=half_bins)
        .map(|k| k as f64 * bin_width)
        .collect();
    let mut counts = vec![0u64; nbins];
    let mut peak_areas = vec![0u64; 2 * n_side_peaks + 1];
    let np = n_side_peaks as i64;
    let mut lo = 0;
    for &ta in a {
        while lo < b.len() && b[lo] < ta - window {
            lo += 1;
        }
        for &tb in &b[lo..] {
            let tau = tb - ta;
            if tau > window {
                break;
            }
            if tau < -window {
                continue;
            }
            let bin = ((tau / bin_width).round() as i64).clamp(-half_bins, half_bins);
            counts[(bin + half_bins) as usize] += 1;
            let peak = ((tau / period).round() as i64).clamp(-np, np);
            peak_areas[(peak + np) as usize] += 1;
        }
    }
    let side: u64 = peak_areas
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != n_side_peaks)
        .map(|(_, c)| c)
        .sum();
    let zero_delay_ratio = if side > 0 {
        Some(peak_areas[n_side_peaks] as f64 / (side as f64 / (2 * n_side_peaks) as f64))
    } else {
        None
    };
    CorrelationHistogram {
        delays,
        counts,
        peak_areas,
        zero_delay_ratio,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HBTResult {
    pub histogram: CorrelationHistogram,
    pub per_trigger: PhotonNumberDistribution,
    pub stats: PhotonStats,
    pub n_periods: u64,
    pub seed: u64,
    /// Every jump of the trajectory, absolute times.
    #[serde(skip)]
    pub jumps: Vec<Jump>,
    pub detections_a: Vec<f64>,
    pub detections_b: Vec<f64>,
    pub warnings: Vec<String>,
}

const DARK_STREAM: u64 = 0xDA4C_0000_0000_0000;

/// Run the pulse train through one trajectory, route cavity photons through
/// a beamsplitter and histogram the A–B delays.
///
/// The model's pump supplies r0, width and the offset within each period;
/// its repetition period, if set, must equal 1/rep_rate.
pub fn simulate_hbt(model: &SystemModel, cfg: &HBTConfig) -> Result<HBTResult> {
    cfg.validate()?;
    let period = cfg.period();
    let mut pump = model.pump;
    if let Some(p) = pump.rep_period {
        if ((p - period) / period).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "pump repetition period {p:e} s does not match rep_rate {:e} Hz",
                cfg.rep_rate
            )));
        }
    }
    let pulse_end = pump.t_start + pump.width;
    if pulse_end >= period {
        return Err(Error::invalid(
            "width",
            "pump pulse does not fit inside one repetition period",
        ));
    }
    pump.rep_period = None;
    let local = model.clone().with_pump(pump);
    local.validate()?;

    let mut warnings = Vec::new();
    if pump.r0 > 0.0 {
        // populations relax at twice the amplitude rate
        let decay = 2.0 * slowest_single_excitation_decay(&local)?;
        if decay > 0.0 && period < 1.0 / decay {
            let msg = format!(
                "repetition period {period:e} s is shorter than the emission lifetime {:e} s; pulses overlap",
                1.0 / decay
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }

    let engine = TrajectoryEngine::from_model(&local, Frame::Rotating)?;
    let segments: Vec<(f64, f64, bool)> = [
        (0.0, pump.t_start, false),
        (pump.t_start, pulse_end, pump.r0 > 0.0),
        (pulse_end, period, false),
    ]
    .into_iter()
    .filter(|s| s.1 > s.0)
    .collect();

    let n_periods = cfg.n_periods();
    let psi0 = ground_ket(&local)?;
    let mut state: Option<TrajectoryState> = None;
    let mut jumps = Vec::new();
    let mut local_jumps = Vec::new();
    let (mut det_a, mut det_b) = (Vec::new(), Vec::new());
    for k in 0..n_periods {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, k));
        let st = match state.as_mut() {
            Some(s) => {
                s.restart(&mut rng);
                s
            }
            None => state.insert(TrajectoryState::new(&psi0, &mut rng)?),
        };
        let offset = k as f64 * period;
        for &(t0, t1, on) in &segments {
            local_jumps.clear();
            engine
                .propagate(st, t0, t1, on, &mut rng, &mut local_jumps)
                .map_err(|e| match e {
                    Error::NormUnderflow { t } => {
                        Error::Tolerance(format!("norm underflow at t = {:e} s", offset + t))
                    }
                    other => other,
                })?;
            for j in &local_jumps {
                let t = offset + j.time;
                jumps.push(Jump {
                    time: t,
                    tag: j.tag,
                });
                if j.tag.is_cavity_emission() {
                    let detected = cfg.efficiency >= 1.0 || rng.random::<f64>() < cfg.efficiency;
                    let to_a = rng.random::<f64>() < cfg.splitter_ratio;
                    if detected {
                        if to_a {
                            det_a.push(t)
                        } else {
                            det_b.push(t)
                        }
                    }
                }
            }
        }
    }

    let span = n_periods as f64 * period;
    if cfg.dark_count_rate > 0.0 {
        for (d, list) in [&mut det_a, &mut det_b].into_iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed ^ DARK_STREAM, d as u64));
            let mut t = 0.0;
            loop {
                t += -(1.0 - rng.random::<f64>()).ln() / cfg.dark_count_rate;
                if t >= span {
                    break;
                }
                list.push(t);
            }
            list.sort_by(f64::total_cmp);
        }
    }

    let histogram = correlate(&det_a, &det_b, period, cfg.bin_width, cfg.n_side_peaks);
    let per_trigger = photon_number_per_trigger(&jumps, period, n_periods);
    Ok(HBTResult {
        stats: per_trigger.to_stats(),
        histogram,
        per_trigger,
        n_periods,
        seed: cfg.seed,
        jumps,
        detections_a: det_a,
        detections_b: det_b,
        warnings,
    })
}
