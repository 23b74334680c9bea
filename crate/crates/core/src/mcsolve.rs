//! Quantum-trajectory unraveling of the master equation.
//!
//! H_eff is piecewise constant (the pump is a top-hat), so between jumps the
//! state is propagated exactly with cached matrix exponentials. For a segment
//! of length L the cache holds U_k = exp(−i H_eff L / 2^k) for k = 0..=K with
//! L/2^K ≤ [`JUMP_RESOLUTION`]; the threshold crossing is then located by
//! bisection over aligned dyadic blocks, which needs O(K) mat-vecs per jump.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, RwLock};

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    build_channels, build_hamiltonian, Channel, ChannelTag, Frame, PumpPulse, SystemModel,
};
use crate::quantum::{CMatrix, CVector, HilbertSpace, Operator, SparseOp, StateVector, ONE, ZERO};

/// Finest time resolution of jump location (s).
pub const JUMP_RESOLUTION: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Jump {
    pub time: f64,
    pub tag: ChannelTag,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub index: usize,
    pub seed: u64,
    pub jumps: Vec<Jump>,
    pub final_state: StateVector,
}

impl TrajectoryRecord {
    pub fn count(&self, pred: impl Fn(ChannelTag) -> bool) -> usize {
        self.jumps.iter().filter(|j| pred(j.tag)).count()
    }

    pub fn cavity_jumps(&self) -> usize {
        self.count(ChannelTag::is_cavity_emission)
    }
}

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of stream `index` under master seed `seed0`. Depends only on the
/// pair, so results do not depend on scheduling.
pub fn derive_seed(seed0: u64, index: u64) -> u64 {
    splitmix64(seed0 ^ splitmix64(index))
}

struct JumpChannel {
    tag: ChannelTag,
    op: SparseOp,
    number: SparseOp,
    rate: f64,
    pumped: bool,
}

struct Ladder {
    /// U_k for k = 0..=K.
    levels: Vec<CMatrix>,
    finest: f64,
}

type LadderKey = (bool, u64);

/// Precomputed non-unitary propagators and jump operators for one model.
pub struct TrajectoryEngine {
    space: HilbertSpace,
    h_static: CMatrix,
    h_pump: CMatrix,
    channels: Vec<JumpChannel>,
    pulse: Option<PumpPulse>,
    cache: RwLock<HashMap<LadderKey, Arc<Ladder>>>,
}

/// Unnormalised trajectory state and the current jump threshold.
#[derive(Debug, Clone)]
pub struct TrajectoryState {
    pub psi: CVector,
    pub threshold: f64,
    scratch: CVector,
}

impl TrajectoryState {
    pub fn new(psi0: &StateVector, rng: &mut impl Rng) -> Result<Self> {
        let mut s = psi0.clone();
        s.normalize()?;
        let psi = s.amplitudes().clone();
        let n = psi.len();
        Ok(Self {
            psi,
            threshold: draw_threshold(rng),
            scratch: CVector::zeros(n),
        })
    }

    pub fn norm_squared(&self) -> f64 {
        self.psi.norm_squared()
    }

    /// Normalise and draw a fresh threshold. Statistically neutral because
    /// the no-jump probability is memoryless.
    pub fn restart(&mut self, rng: &mut impl Rng) {
        let n = self.psi.norm();
        if n > 0.0 {
            self.psi /= Complex64::new(n, 0.0);
        }
        self.threshold = draw_threshold(rng);
    }

    /// ⟨ψ|O|ψ⟩ / ⟨ψ|ψ⟩.
    pub fn expectation(&self, op: &SparseOp) -> f64 {
        op.expectation_vec(self.psi.as_slice()).re / self.psi.norm_squared()
    }
}

fn draw_threshold(rng: &mut impl Rng) -> f64 {
    // in (0, 1]
    1.0 - rng.random::<f64>()
}

impl TrajectoryEngine {
    pub fn new(h: &Operator, channels: &[Channel]) -> Result<Self> {
        let space = h.space().clone();
        let n = space.total_dim();
        let mut h_static = h.matrix().clone();
        let mut h_pump = CMatrix::zeros(n, n);
        let mut out = Vec::new();
        let mut pulse = None;
        for ch in channels {
            if ch.operator.space() != &space {
                return Err(Error::SpaceMismatch);
            }
            let o = ch.operator.matrix();
            let number = o.adjoint() * o;
            let pumped = ch.pulse.is_some();
            if pumped {
                if pulse.is_some() {
                    return Err(Error::invalid(
                        "channels",
                        "at most one pumped channel is supported",
                    ));
                }
                pulse = ch.pulse;
                h_pump -= &number * Complex64::new(0.0, 0.5);
            } else {
                h_static -= &number * Complex64::new(0.0, 0.5 * ch.rate);
            }
            out.push(JumpChannel {
                tag: ch.tag,
                op: SparseOp::from_dense(o),
                number: SparseOp::from_dense(&number),
                rate: ch.rate,
                pumped,
            });
        }
        Ok(Self {
            space,
            h_static,
            h_pump,
            channels: out,
            pulse,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn from_model(model: &SystemModel, frame: Frame) -> Result<Self> {
        Self::new(&build_hamiltonian(model, frame)?, &build_channels(model)?)
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn pulse(&self) -> Option<&PumpPulse> {
        self.pulse.as_ref()
    }

    pub fn tags(&self) -> Vec<ChannelTag> {
        self.channels.iter().map(|c| c.tag).collect()
    }

    pub fn has_channel(&self, tag: ChannelTag) -> bool {
        self.channels.iter().any(|c| c.tag == tag)
    }

    /// Σ rate·⟨O†O⟩ over the cavity-emission channels (normalised state).
    pub fn cavity_flux(&self, state: &TrajectoryState) -> f64 {
        self.channels
            .iter()
            .filter(|c| c.tag.is_cavity_emission())
            .map(|c| c.rate * state.expectation(&c.number))
            .sum()
    }

    fn ladder(&self, pump_on: bool, len: f64) -> Arc<Ladder> {
        // lengths are quantised to 1e-18 s for the cache key
        let key = (pump_on, (len * 1e18).round() as u64);
        if let Some(l) = self.cache.read().expect("poisoned").get(&key) {
            return Arc::clone(l);
        }
        let k = (len / JUMP_RESOLUTION).log2().ceil().max(0.0) as usize;
        let rate = if pump_on {
            self.pulse.map_or(0.0, |p| p.r0)
        } else {
            0.0
        };
        let h = if rate > 0.0 {
            &self.h_static + &self.h_pump * Complex64::new(rate, 0.0)
        } else {
            self.h_static.clone()
        };
        let levels = (0..=k)
            .map(|j| (&h * Complex64::new(0.0, -len / (1u64 << j) as f64)).exp())
            .collect();
        let ladder = Arc::new(Ladder {
            levels,
            finest: len / (1u64 << k) as f64,
        });
        self.cache
            .write()
            .expect("poisoned")
            .entry(key)
            .or_insert(ladder)
            .clone()
    }

    /// Evolve from t0 to t1 (pump state constant on the interval), applying
    /// jumps as the norm crosses the threshold.
    pub fn propagate(
        &self,
        state: &mut TrajectoryState,
        t0: f64,
        t1: f64,
        pump_on: bool,
        rng: &mut impl Rng,
        jumps: &mut Vec<Jump>,
    ) -> Result<()> {
        if t1 <= t0 {
            return Ok(());
        }
        let ladder = self.ladder(pump_on, t1 - t0);
        let kmax = ladder.levels.len() - 1;
        let total: u64 = 1 << kmax;
        let mut m: u64 = 0;
        while m < total {
            let mut j = if m == 0 {
                kmax as u32
            } else {
                m.trailing_zeros().min(kmax as u32)
            };
            while m + (1u64 << j) > total {
                j -= 1;
            }
            if self.try_advance(state, &ladder.levels[kmax - j as usize]) {
                m += 1 << j;
                continue;
            }
            // the crossing lies in [m, m + 2^j)
            while j > 0 {
                j -= 1;
                if self.try_advance(state, &ladder.levels[kmax - j as usize]) {
                    m += 1 << j;
                }
            }
            state
                .scratch
                .gemv(ONE, &ladder.levels[kmax], &state.psi, ZERO);
            std::mem::swap(&mut state.psi, &mut state.scratch);
            m += 1;
            let t = t0 + m as f64 * ladder.finest;
            self.jump(state, t, pump_on, rng, jumps)?;
        }
        Ok(())
    }

    fn try_advance(&self, state: &mut TrajectoryState, u: &CMatrix) -> bool {
        state.scratch.gemv(ONE, u, &state.psi, ZERO);
        if state.scratch.norm_squared() >= state.threshold {
            std::mem::swap(&mut state.psi, &mut state.scratch);
            true
        } else {
            false
        }
    }

    fn jump(
        &self,
        state: &mut TrajectoryState,
        t: f64,
        pump_on: bool,
        rng: &mut impl Rng,
        jumps: &mut Vec<Jump>,
    ) -> Result<()> {
        let pump_rate = if pump_on {
            self.pulse.map_or(0.0, |p| p.r0)
        } else {
            0.0
        };
        let psi = state.psi.as_slice();
        let weights: Vec<f64> = self
            .channels
            .iter()
            .map(|c| {
                let r = if c.pumped { pump_rate } else { c.rate };
                r * c.number.expectation_vec(psi).re.max(0.0)
            })
            .collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::NormUnderflow { t });
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = weights.len() - 1;
        for (k, w) in weights.iter().enumerate() {
            acc += w;
            if target < acc && *w > 0.0 {
                pick = k;
                break;
            }
        }
        let ch = &self.channels[pick];
        let mut out = CVector::zeros(psi.len());
        ch.op.mul_vec_add(psi, ONE, out.as_mut_slice());
        let norm = out.norm();
        if !(norm > 0.0) {
            return Err(Error::NormUnderflow { t });
        }
        state.psi = out / Complex64::new(norm, 0.0);
        state.threshold = draw_threshold(rng);
        jumps.push(Jump {
            time: t,
            tag: ch.tag,
        });
        Ok(())
    }

    /// Stop times: uniform samples plus pump edges, with the pump state of
    /// each interval.
    fn schedule(&self, t_final: f64, record_dt: Option<f64>) -> Vec<(f64, bool, bool)> {
        let mut stops: Vec<(f64, bool)> = vec![(0.0, true), (t_final, true)];
        if let Some(dt) = record_dt {
            let n = (t_final / dt).round() as usize;
            stops.extend((1..n).map(|k| (k as f64 * dt, true)));
        }
        if let Some(p) = &self.pulse {
            stops.extend(p.edges(0.0, t_final).into_iter().map(|e| (e, false)));
        }
        stops.sort_by(|a, b| a.0.total_cmp(&b.0));
        let tol = 1e-9 * record_dt.unwrap_or(t_final);
        let mut merged: Vec<(f64, bool)> = Vec::new();
        for (t, r) in stops {
            match merged.last_mut() {
                Some(last) if (t - last.0).abs() <= tol => last.1 |= r,
                _ => merged.push((t, r)),
            }
        }
        // (end time, is sample, pump on during the interval ending here)
        let mut out = vec![(0.0, merged[0].1, false)];
        for w in merged.windows(2) {
            let mid = 0.5 * (w[0].0 + w[1].0);
            let on = self.pulse.is_some_and(|p| p.is_on(mid) && p.r0 > 0.0);
            out.push((w[1].0, w[1].1, on));
        }
        out
    }
}

/// Ground state |g₀, 0, 0⟩ as a ket.
pub fn ground_ket(model: &SystemModel) -> Result<StateVector> {
    let space = model.space();
    let idx = model.basis_index(Some(0), 0, 0)?;
    StateVector::basis(&space, &space.digits_of(idx))
}

/// Single trajectory over [0, t_final].
pub fn run_trajectory(
    model: &SystemModel,
    psi0: &StateVector,
    t_final: f64,
    seed: u64,
) -> Result<TrajectoryRecord> {
    let engine = TrajectoryEngine::from_model(model, Frame::Rotating)?;
    let (rec, _) = trajectory(&engine, psi0, t_final, seed, 0, None)?;
    Ok(rec)
}

/// Per-trajectory samples: rows are observables, columns are sample times.
type Samples = Vec<Vec<f64>>;

pub const ENSEMBLE_OBSERVABLES: [&str; 4] = ["sigma_ee", "n_cavity", "cavity_flux", "cavity_jumps"];

fn trajectory(
    engine: &TrajectoryEngine,
    psi0: &StateVector,
    t_final: f64,
    seed: u64,
    index: usize,
    sampling: Option<(f64, &[SparseOp; 2])>,
) -> Result<(TrajectoryRecord, Samples)> {
    if psi0.space() != engine.space() {
        return Err(Error::SpaceMismatch);
    }
    if !(t_final > 0.0) {
        return Err(Error::invalid("t_final", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = TrajectoryState::new(psi0, &mut rng)?;
    let mut jumps = Vec::new();
    let stops = engine.schedule(t_final, sampling.map(|s| s.0));
    let mut samples: Samples = vec![Vec::new(); ENSEMBLE_OBSERVABLES.len()];
    let take = |state: &TrajectoryState, jumps: &[Jump], samples: &mut Samples| {
        if let Some((_, ops)) = sampling {
            samples[0].push(state.expectation(&ops[0]));
            samples[1].push(state.expectation(&ops[1]));
            samples[2].push(engine.cavity_flux(state));
            samples[3].push(jumps.iter().filter(|j| j.tag.is_cavity_emission()).count() as f64);
        }
    };
    take(&state, &jumps, &mut samples);
    for w in stops.windows(2) {
        let (t0, (t1, sample, pump_on)) = (w[0].0, w[1]);
        engine.propagate(&mut state, t0, t1, pump_on, &mut rng, &mut jumps)?;
        if sample {
            take(&state, &jumps, &mut samples);
        }
    }
    let mut final_state = StateVector::new(engine.space().clone(), state.psi.clone())?;
    final_state.normalize()?;
    Ok((
        TrajectoryRecord {
            index,
            seed,
            jumps,
            final_state,
        },
        samples,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub n_traj: usize,
    pub seed0: u64,
    pub times: Vec<f64>,
    pub records: Vec<TrajectoryRecord>,
    /// Ensemble means of `sigma_ee`, `n_cavity`, `cavity_flux` (1/s) and
    /// `cavity_jumps` (cumulative count).
    pub mean: BTreeMap<String, Vec<f64>>,
    /// Sample standard deviation / √n_traj; zero for a single trajectory.
    pub std_err: BTreeMap<String, Vec<f64>>,
}

impl EnsembleResult {
    /// Fraction of trajectories with exactly `k` cavity jumps.
    pub fn cavity_jump_fraction(&self, k: usize) -> f64 {
        self.records
            .iter()
            .filter(|r| r.cavity_jumps() == k)
            .count() as f64
            / self.n_traj as f64
    }
}

const CHUNK: usize = 64;

/// Average `n_traj` trajectories sampled every `record_dt`. Trajectory i uses
/// `derive_seed(seed0, i)`; partial sums are formed over fixed chunks of 64
/// trajectories and added in index order, so the result is bit-identical for
/// any thread count.
pub fn ensemble_average(
    model: &SystemModel,
    psi0: &StateVector,
    t_final: f64,
    n_traj: usize,
    seed0: u64,
    record_dt: f64,
) -> Result<EnsembleResult> {
    if n_traj == 0 {
        return Err(Error::invalid("n_traj", "need at least one trajectory"));
    }
    if !(record_dt > 0.0) {
        return Err(Error::invalid("record_dt", "must be positive"));
    }
    let engine = TrajectoryEngine::from_model(model, Frame::Rotating)?;
    let obs = crate::mesolve::default_observables(model)?;
    let find = |name: &str| {
        obs.iter()
            .find(|(n, _)| n == name)
            .map(|(_, o)| o.clone())
            .expect("observable")
    };
    let ops = [find("sigma_ee"), find("n_cavity")];
    let times: Vec<f64> = engine
        .schedule(t_final, Some(record_dt))
        .into_iter()
        .filter(|s| s.1)
        .map(|s| s.0)
        .collect();

    let n_chunks = n_traj.div_ceil(CHUNK);
    type ChunkOut = (Vec<TrajectoryRecord>, Samples, Samples);
    let chunks: Vec<Result<ChunkOut>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let nobs = ENSEMBLE_OBSERVABLES.len();
            let mut sum = vec![vec![0.0; times.len()]; nobs];
            let mut sumsq = vec![vec![0.0; times.len()]; nobs];
            let mut recs = Vec::new();
            for i in c * CHUNK..((c + 1) * CHUNK).min(n_traj) {
                let seed = derive_seed(seed0, i as u64);
                let (rec, samples) =
                    trajectory(&engine, psi0, t_final, seed, i, Some((record_dt, &ops)))
                        .map_err(|e| annotate(e, i))?;
                for k in 0..nobs {
                    for (s, v) in samples[k].iter().enumerate() {
                        sum[k][s] += v;
                        sumsq[k][s] += v * v;
                    }
                }
                recs.push(rec);
            }
            Ok((recs, sum, sumsq))
        })
        .collect();

    let nobs = ENSEMBLE_OBSERVABLES.len();
    let mut sum = vec![vec![0.0; times.len()]; nobs];
    let mut sumsq = vec![vec![0.0; times.len()]; nobs];
    let mut records = Vec::with_capacity(n_traj);
    for chunk in chunks {
        let (recs, s, sq) = chunk?;
        records.extend(recs);
        for k in 0..nobs {
            for i in 0..times.len() {
                sum[k][i] += s[k][i];
                sumsq[k][i] += sq[k][i];
            }
        }
    }
    let n = n_traj as f64;
    let mut mean = BTreeMap::new();
    let mut std_err = BTreeMap::new();
    for (k, name) in ENSEMBLE_OBSERVABLES.iter().enumerate() {
        let m: Vec<f64> = sum[k].iter().map(|s| s / n).collect();
        let se: Vec<f64> = if n_traj > 1 {
            sumsq[k]
                .iter()
                .zip(&m)
                .map(|(sq, mu)| (((sq - n * mu * mu) / (n - 1.0)).max(0.0) / n).sqrt())
                .collect()
        } else {
            vec![0.0; times.len()]
        };
        mean.insert(name.to_string(), m);
        std_err.insert(name.to_string(), se);
    }
    Ok(EnsembleResult {
        n_traj,
        seed0,
        times,
        records,
        mean,
        std_err,
    })
}

fn annotate(e: Error, index: usize) -> Error {
    match e {
        Error::NormUnderflow { t } => {
            Error::Tolerance(format!("trajectory {index}: norm underflow at t = {t:e} s"))
        }
        other => other,
    }
}

/// Normalised copy of an amplitude vector as a [`StateVector`].
pub fn state_from_amplitudes(space: &HilbertSpace, amps: Vec<Complex64>) -> Result<StateVector> {
    let mut s = StateVector::new(space.clone(), DVector::from_vec(amps))?;
    s.normalize()?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{presets, CouplingConvention};

    fn decay_only() -> SystemModel {
        let mut m = presets::two_level(1, 0).with_pump(PumpPulse::off());
        m.coupling.omegas = vec![0.0];
        m.cavity.q = 1e30;
        m
    }

    fn excited_ket(m: &SystemModel) -> StateVector {
        let space = m.space();
        let idx = m.basis_index(None, 0, 0).unwrap();
        StateVector::basis(&space, &space.digits_of(idx)).unwrap()
    }

    #[test]
    fn closed_system_has_no_jumps_and_unit_norm() {
        let mut m = presets::two_level(2, 0).with_pump(PumpPulse::off());
        m.coupling.convention = CouplingConvention::HalfRabi;
        m.scheme.radiative_rates = vec![0.0];
        m.scheme.pl_lifetime = f64::INFINITY;
        m.cavity.q = 1e300;
        let rec = run_trajectory(&m, &excited_ket(&m), 500e-12, 3).unwrap();
        assert!(rec.jumps.is_empty());
        assert!((rec.final_state.norm_squared() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn decay_times_follow_exponential_law() {
        let m = decay_only();
        let gamma = 1.0 / presets::PL_LIFETIME;
        let engine = TrajectoryEngine::from_model(&m, Frame::Rotating).unwrap();
        let psi0 = excited_ket(&m);
        let n = 10_000;
        let t_final = 40.0 / gamma;
        let mut times: Vec<f64> = (0..n)
            .map(|i| {
                let (rec, _) = trajectory(
                    &engine,
                    &psi0,
                    t_final,
                    derive_seed(11, i),
                    i as usize,
                    None,
                )
                .unwrap();
                assert_eq!(rec.jumps.len(), 1);
                assert_eq!(rec.jumps[0].tag, ChannelTag::Radiative(0));
                rec.jumps[0].time
            })
            .collect();
        times.sort_by(f64::total_cmp);
        // Kolmogorov–Smirnov statistic against 1 − exp(−γt)
        let d = times
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let f = 1.0 - (-gamma * t).exp();
                let lo = i as f64 / n as f64;
                let hi = (i + 1) as f64 / n as f64;
                (f - lo).abs().max((hi - f).abs())
            })
            .fold(0.0, f64::max);
        // 1% critical value
        assert!(d < 1.63 / (n as f64).sqrt(), "KS statistic {d}");
        let mean = times.iter().sum::<f64>() / n as f64;
        assert!((mean * gamma - 1.0).abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn norm_is_monotone_between_jumps() {
        let m = presets::two_level(4, 0);
        let engine = TrajectoryEngine::from_model(&m, Frame::Rotating).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut state = TrajectoryState::new(&ground_ket(&m).unwrap(), &mut rng).unwrap();
        state.threshold = 0.0; // never jump
        let mut jumps = Vec::new();
        let mut last = state.norm_squared();
        let mut t = 0.0;
        for k in 0..400 {
            let t1 = t + 0.01e-12 * (1.0 + (k % 3) as f64);
            let on = m.pump.is_on(0.5 * (t + t1));
            engine
                .propagate(&mut state, t, t1, on, &mut rng, &mut jumps)
                .unwrap();
            let now = state.norm_squared();
            assert!(now <= last * (1.0 + 1e-14));
            last = now;
            t = t1;
        }
        assert!(jumps.is_empty());
    }

    #[test]
    fn jump_tags_are_built_channels_and_times_increase() {
        let m = presets::two_level(4, 0);
        let engine = TrajectoryEngine::from_model(&m, Frame::Rotating).unwrap();
        for i in 0..200 {
            let (rec, _) = trajectory(
                &engine,
                &ground_ket(&m).unwrap(),
                1e-9,
                derive_seed(9, i),
                i as usize,
                None,
            )
            .unwrap();
            for w in rec.jumps.windows(2) {
                assert!(w[1].time > w[0].time);
            }
            for j in &rec.jumps {
                assert!(engine.has_channel(j.tag));
            }
        }
    }

    #[test]
    fn single_trajectory_ensemble_equals_record() {
        let m = presets::two_level(4, 0);
        let psi0 = ground_ket(&m).unwrap();
        let ens = ensemble_average(&m, &psi0, 300e-12, 1, 42, 10e-12).unwrap();
        let engine = TrajectoryEngine::from_model(&m, Frame::Rotating).unwrap();
        let obs = crate::mesolve::default_observables(&m).unwrap();
        let ops = [obs[0].1.clone(), obs[1].1.clone()];
        let (rec, samples) = trajectory(
            &engine,
            &psi0,
            300e-12,
            derive_seed(42, 0),
            0,
            Some((10e-12, &ops)),
        )
        .unwrap();
        assert_eq!(ens.records[0], rec);
        assert_eq!(ens.mean["sigma_ee"], samples[0]);
        assert!(ens.std_err["sigma_ee"].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ensembles_are_bit_identical_for_a_seed() {
        let m = presets::two_level(4, 0);
        let psi0 = ground_ket(&m).unwrap();
        let a = ensemble_average(&m, &psi0, 200e-12, 150, 7, 10e-12).unwrap();
        let b = ensemble_average(&m, &psi0, 200e-12, 150, 7, 10e-12).unwrap();
        assert_eq!(a, b);
        let c = ensemble_average(&m, &psi0, 200e-12, 150, 8, 10e-12).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn operating_point_emits_one_photon_per_pulse() {
        let m = presets::two_level(4, 0);
        let psi0 = ground_ket(&m).unwrap();
        let ens = ensemble_average(&m, &psi0, 2e-9, 2000, 1, 100e-12).unwrap();
        let one = ens.cavity_jump_fraction(1);
        assert!((one - 0.99).abs() < 0.01, "single-photon fraction {one}");
        let multi = ens.records.iter().filter(|r| r.cavity_jumps() >= 2).count();
        assert_eq!(multi, 0);
    }

    #[test]
    fn seeds_are_well_spread() {
        let seeds: std::collections::HashSet<u64> =
            (0..10_000).map(|i| derive_seed(0, i)).collect();
        assert_eq!(seeds.len(), 10_000);
        assert_ne!(derive_seed(1, 0), derive_seed(0, 1));
    }

    #[test]
    fn zero_trajectories_is_an_error() {
        let m = presets::two_level(4, 0);
        assert!(ensemble_average(&m, &ground_ket(&m).unwrap(), 1e-12, 0, 0, 1e-13).is_err());
    }
}
