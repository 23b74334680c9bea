//! Lindblad master-equation integration with a piecewise-constant pump.
//!
//! ρ is stored row-major as a flat vector. The integrated state carries one
//! extra entry per channel holding ∫ rate(t)·Tr(O†Oρ) dt, so channel
//! probabilities come out of the same integration as ρ itself.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::sync::Mutex;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    build_channels, build_hamiltonian, kappa_from_q, Channel, ChannelTag, Frame, PumpPulse,
    SystemModel, ATOM, CAVITY, WAVEGUIDE,
};
use crate::quantum::{
    destroy, kron_embed, min_hermitian_eigenvalue, transition, CMatrix, DensityMatrix,
    HilbertSpace, Operator, SparseOp, I, ONE, ZERO,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Dormand–Prince 5(4) with step-size control.
    AdaptiveRk45,
    /// Classical RK4 with step `max_step`.
    FixedRk4,
    /// Exact propagation with the matrix exponential of the generator,
    /// restricted to the coherences reachable from ρ₀. Suited to stiff
    /// problems (large κ) where explicit methods need tiny steps.
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Upper bound on the step (adaptive) or the step itself (fixed RK4).
    pub max_step: f64,
    pub record_dt: f64,
    pub frame: Frame,
    /// Abort once this many steps have been taken.
    pub max_steps: usize,
    /// Evaluate trace, hermiticity and minimum eigenvalue at every sample.
    pub check_invariants: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::AdaptiveRk45,
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            max_step: 1e-12,
            record_dt: 1e-12,
            frame: Frame::Rotating,
            max_steps: 20_000_000,
            check_invariants: true,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(Error::invalid("tolerance", "tolerances must be positive"));
        }
        if !(self.record_dt > 0.0) {
            return Err(Error::invalid("record_dt", "must be positive"));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::invalid("max_step", "must be positive"));
        }
        Ok(())
    }
}

/// Worst invariant violations seen over all recorded samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InvariantSummary {
    pub max_trace_drift: f64,
    pub max_hermiticity_error: f64,
    pub min_eigenvalue: f64,
}

impl InvariantSummary {
    fn new() -> Self {
        Self {
            max_trace_drift: 0.0,
            max_hermiticity_error: 0.0,
            min_eigenvalue: f64::INFINITY,
        }
    }

    pub fn within(&self, trace: f64, hermiticity: f64, eigenvalue: f64) -> bool {
        self.max_trace_drift <= trace
            && self.max_hermiticity_error <= hermiticity
            && self.min_eigenvalue >= -eigenvalue
    }
}

#[derive(Debug, Clone)]
pub struct EmissionResult {
    pub times: Vec<f64>,
    /// Named observables sampled at `times`: `sigma_ee`, `n_cavity`,
    /// `n_waveguide`, `rho_e00`, `rho_g00` and, when the waveguide mode is
    /// present, `rho_WW` (population of |g₀,0,1⟩).
    pub populations: BTreeMap<String, Vec<f64>>,
    /// Instantaneous flux rate(t)·⟨O†O⟩ per channel tag.
    pub channel_flux: BTreeMap<ChannelTag, Vec<f64>>,
    /// Output intensity: flux of the cavity channel (1/s).
    pub intensity: Vec<f64>,
    /// ∫ intensity dt, integrated alongside ρ.
    pub integral_ww: f64,
    /// First moment of the intensity (trapezoid on the samples).
    pub mean_emission_time: f64,
    /// ∫ rate(t)·⟨O†O⟩ dt per channel tag.
    pub channel_integrals: BTreeMap<ChannelTag, f64>,
    pub invariants: InvariantSummary,
    pub steps: usize,
    pub rejected_steps: usize,
    pub final_state: DensityMatrix,
}

struct SuperChannel {
    tag: ChannelTag,
    op: SparseOp,
    number: SparseOp,
    rate: f64,
    pumped: bool,
}

/// Sparse representation of the generator ρ ↦ −i[H,ρ] + Σ rate·D[O]ρ.
pub struct Liouvillian {
    dim: usize,
    space: HilbertSpace,
    /// H − (i/2) Σ_constant rate·O†O.
    k_static: SparseOp,
    /// −(i/2) O†O of the pump channel; multiplied by r(t).
    k_pump: SparseOp,
    channels: Vec<SuperChannel>,
    pulse: Option<PumpPulse>,
}

impl Liouvillian {
    pub fn new(h: &Operator, channels: &[Channel]) -> Result<Self> {
        let space = h.space().clone();
        let n = space.total_dim();
        let mut k_static = h.matrix().clone();
        let mut k_pump = CMatrix::zeros(n, n);
        let mut supers = Vec::with_capacity(channels.len());
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
                k_pump -= &number * Complex64::new(0.0, 0.5);
            } else {
                k_static -= &number * Complex64::new(0.0, 0.5 * ch.rate);
            }
            supers.push(SuperChannel {
                tag: ch.tag,
                op: SparseOp::from_dense(o),
                number: SparseOp::from_dense(&number),
                rate: ch.rate,
                pumped,
            });
        }
        Ok(Self {
            dim: n,
            space,
            k_static: SparseOp::from_dense(&k_static),
            k_pump: SparseOp::from_dense(&k_pump),
            channels: supers,
            pulse,
        })
    }

    pub fn from_model(model: &SystemModel, frame: Frame) -> Result<Self> {
        Self::new(&build_hamiltonian(model, frame)?, &build_channels(model)?)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn space(&self) -> &HilbertSpace {
        &self.space
    }

    pub fn pulse(&self) -> Option<&PumpPulse> {
        self.pulse.as_ref()
    }

    pub fn pump_rate_at(&self, t: f64) -> f64 {
        self.pulse.map_or(0.0, |p| p.rate_at(t))
    }

    pub fn channel_tags(&self) -> Vec<ChannelTag> {
        self.channels.iter().map(|c| c.tag).collect()
    }

    fn channel_rate(&self, c: &SuperChannel, pump_rate: f64) -> f64 {
        if c.pumped {
            pump_rate
        } else {
            c.rate
        }
    }

    /// out = L ρ for the given pump rate (ρ row-major, length dim²).
    pub fn apply(&self, rho: &[Complex64], pump_rate: f64, out: &mut [Complex64]) {
        let n = self.dim;
        out.iter_mut().for_each(|x| *x = ZERO);
        let mut commutator = |k: &SparseOp, scale: f64| {
            for &(i, j, v) in k.entries() {
                // −i K ρ
                let a = -I * v * scale;
                let (src, dst) = (j * n, i * n);
                for c in 0..n {
                    out[dst + c] += a * rho[src + c];
                }
                // +i ρ K†
                let b = I * v.conj() * scale;
                for r in 0..n {
                    out[r * n + i] += b * rho[r * n + j];
                }
            }
        };
        commutator(&self.k_static, 1.0);
        if pump_rate != 0.0 {
            commutator(&self.k_pump, pump_rate);
        }
        for c in &self.channels {
            let rate = self.channel_rate(c, pump_rate);
            if rate == 0.0 {
                continue;
            }
            let entries = c.op.entries();
            for &(i, j, v) in entries {
                for &(k, l, w) in entries {
                    out[i * n + k] += rate * v * w.conj() * rho[j * n + l];
                }
            }
        }
    }

    /// rate(t)·Tr(O†Oρ) for every channel, in channel order.
    pub fn fluxes(&self, rho: &[Complex64], pump_rate: f64) -> Vec<f64> {
        self.channels
            .iter()
            .map(|c| self.channel_rate(c, pump_rate) * c.number.trace_with(rho).re)
            .collect()
    }

    /// Dense dim²×dim² matrix of the generator acting on row-major vec(ρ).
    pub fn superoperator(&self, pump_rate: f64) -> CMatrix {
        let n2 = self.dim * self.dim;
        let mut m = CMatrix::zeros(n2, n2);
        let mut e = vec![ZERO; n2];
        let mut out = vec![ZERO; n2];
        for col in 0..n2 {
            e[col] = ONE;
            self.apply(&e, pump_rate, &mut out);
            for (row, v) in out.iter().enumerate() {
                m[(row, col)] = *v;
            }
            e[col] = ZERO;
        }
        m
    }

    /// Derivative of the augmented state [vec(ρ), accumulators].
    fn augmented(&self, y: &[Complex64], pump_rate: f64, out: &mut [Complex64]) {
        let n2 = self.dim * self.dim;
        self.apply(&y[..n2], pump_rate, &mut out[..n2]);
        for (k, c) in self.channels.iter().enumerate() {
            let rate = self.channel_rate(c, pump_rate);
            out[n2 + k] = Complex64::new(rate * c.number.trace_with(&y[..n2]).re, 0.0);
        }
    }
}

/// L(t)ρ for a dense density matrix.
pub fn liouvillian_apply(
    h: &Operator,
    channels: &[Channel],
    rho: &DensityMatrix,
    t: f64,
) -> Result<CMatrix> {
    if rho.space() != h.space() {
        return Err(Error::SpaceMismatch);
    }
    let l = Liouvillian::new(h, channels)?;
    let n = l.dim();
    let flat = to_row_major(rho.matrix());
    let mut out = vec![ZERO; n * n];
    l.apply(&flat, l.pump_rate_at(t), &mut out);
    Ok(from_row_major(&out, n))
}

pub(crate) fn to_row_major(m: &CMatrix) -> Vec<Complex64> {
    let n = m.nrows();
    let mut v = Vec::with_capacity(n * m.ncols());
    for i in 0..n {
        for j in 0..m.ncols() {
            v.push(m[(i, j)]);
        }
    }
    v
}

pub(crate) fn from_row_major(v: &[Complex64], n: usize) -> CMatrix {
    CMatrix::from_row_slice(n, n, &v[..n * n])
}

/// |g₀, 0, 0⟩⟨g₀, 0, 0|.
pub fn ground_state(model: &SystemModel) -> Result<DensityMatrix> {
    basis_state(model, Some(0), 0, 0)
}

/// |e, 0, 0⟩⟨e, 0, 0|.
pub fn excited_state(model: &SystemModel) -> Result<DensityMatrix> {
    basis_state(model, None, 0, 0)
}

pub fn basis_state(
    model: &SystemModel,
    ground: Option<usize>,
    nc: usize,
    nw: usize,
) -> Result<DensityMatrix> {
    let space = model.space();
    let idx = model.basis_index(ground, nc, nw)?;
    let n = space.total_dim();
    let mut m = CMatrix::zeros(n, n);
    m[(idx, idx)] = ONE;
    DensityMatrix::new(space, m)
}

/// Observables recorded by [`integrate`].
pub fn default_observables(model: &SystemModel) -> Result<Vec<(String, SparseOp)>> {
    let space = model.space();
    let n = space.total_dim();
    let ne = model.excited_position();
    let see = kron_embed(&transition(model.atom_dim(), ne, ne), ATOM, &space)?;
    let a = kron_embed(&destroy(model.truncation.n_cavity + 1), CAVITY, &space)?;
    let b = kron_embed(
        &destroy(model.truncation.n_waveguide + 1),
        WAVEGUIDE,
        &space,
    )?;
    let projector = |idx: usize| {
        let mut m = CMatrix::zeros(n, n);
        m[(idx, idx)] = ONE;
        SparseOp::from_dense(&m)
    };
    let mut obs = vec![
        ("sigma_ee".to_string(), SparseOp::from_dense(see.matrix())),
        (
            "n_cavity".to_string(),
            SparseOp::from_dense(&(a.matrix().adjoint() * a.matrix())),
        ),
        (
            "n_waveguide".to_string(),
            SparseOp::from_dense(&(b.matrix().adjoint() * b.matrix())),
        ),
        (
            "rho_e00".to_string(),
            projector(model.basis_index(None, 0, 0)?),
        ),
        (
            "rho_g00".to_string(),
            projector(model.basis_index(Some(0), 0, 0)?),
        ),
    ];
    if model.truncation.n_waveguide >= 1 {
        obs.push((
            "rho_WW".to_string(),
            projector(model.basis_index(Some(0), 0, 1)?),
        ));
    }
    Ok(obs)
}

/// Integrate the master equation of `model` from `rho0` over [0, t_final].
pub fn integrate(
    model: &SystemModel,
    rho0: &DensityMatrix,
    t_final: f64,
    cfg: &IntegratorConfig,
) -> Result<EmissionResult> {
    let l = Liouvillian::from_model(model, cfg.frame)?;
    let obs = default_observables(model)?;
    integrate_liouvillian(&l, &obs, rho0, t_final, cfg)
}

/// Sample and stop times: every `record_dt` plus all pump edges.
fn schedule(l: &Liouvillian, t_final: f64, record_dt: f64) -> (Vec<f64>, Vec<bool>) {
    let n_rec = (t_final / record_dt).round() as usize;
    let mut stops: Vec<(f64, bool)> = (0..=n_rec)
        .map(|k| ((k as f64 * record_dt).min(t_final), true))
        .collect();
    if stops.last().map(|s| s.0) != Some(t_final) {
        stops.push((t_final, true));
    }
    if let Some(p) = l.pulse() {
        for e in p.edges(0.0, t_final) {
            stops.push((e, false));
        }
    }
    stops.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut times: Vec<f64> = Vec::with_capacity(stops.len());
    let mut record: Vec<bool> = Vec::with_capacity(stops.len());
    for (t, r) in stops {
        if let Some(last) = times.last() {
            if (t - last).abs() <= 1e-9 * record_dt {
                let idx = record.len() - 1;
                record[idx] |= r;
                continue;
            }
        }
        times.push(t);
        record.push(r);
    }
    (times, record)
}

/// Core driver shared by all methods.
pub fn integrate_liouvillian(
    l: &Liouvillian,
    observables: &[(String, SparseOp)],
    rho0: &DensityMatrix,
    t_final: f64,
    cfg: &IntegratorConfig,
) -> Result<EmissionResult> {
    cfg.validate()?;
    if !(t_final > 0.0) {
        return Err(Error::invalid("t_final", "must be positive"));
    }
    if rho0.space() != l.space() {
        return Err(Error::SpaceMismatch);
    }
    let n = l.dim();
    let n2 = n * n;
    let nch = l.channels.len();
    let (stops, record) = schedule(l, t_final, cfg.record_dt);

    let mut rec = Recorder::new(l, observables, rho0, cfg.check_invariants);
    let mut y = to_row_major(rho0.matrix());
    y.extend(std::iter::repeat_n(ZERO, nch));
    rec.sample(0.0, &y[..n2], l.pump_rate_at(0.0));

    let mut stepper: Box<dyn Stepper + '_> = match cfg.method {
        Method::AdaptiveRk45 => Box::new(Rk45::new(l, cfg)),
        Method::FixedRk4 => Box::new(Rk4::new(l, cfg)),
        Method::Exponential => Box::new(Expo::new(l, &y[..n2])),
    };

    for w in 1..stops.len() {
        let (t0, t1) = (stops[w - 1], stops[w]);
        let pump = l.pump_rate_at(0.5 * (t0 + t1));
        stepper.advance(&mut y, t0, t1, pump)?;
        if record[w] {
            rec.sample(t1, &y[..n2], l.pump_rate_at(t1));
        }
    }

    let (steps, rejected) = stepper.counts();
    let final_state = DensityMatrix::new(l.space().clone(), from_row_major(&y[..n2], n))?;
    let accum: Vec<f64> = y[n2..].iter().map(|z| z.re).collect();
    Ok(rec.finish(&accum, steps, rejected, final_state))
}

struct Recorder<'a> {
    observables: &'a [(String, SparseOp)],
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
    flux: Vec<Vec<f64>>,
    trace0: f64,
    check: bool,
    invariants: InvariantSummary,
    tags: Vec<ChannelTag>,
    l: &'a Liouvillian,
}

impl<'a> Recorder<'a> {
    fn new(
        l: &'a Liouvillian,
        observables: &'a [(String, SparseOp)],
        rho0: &DensityMatrix,
        check: bool,
    ) -> Self {
        Self {
            observables,
            times: Vec::new(),
            values: vec![Vec::new(); observables.len()],
            flux: vec![Vec::new(); l.channels.len()],
            trace0: rho0.trace().re,
            check,
            invariants: InvariantSummary::new(),
            tags: l.channel_tags(),
            l,
        }
    }

    fn sample(&mut self, t: f64, rho: &[Complex64], pump_rate: f64) {
        self.times.push(t);
        for (k, (_, op)) in self.observables.iter().enumerate() {
            self.values[k].push(op.trace_with(rho).re);
        }
        for (k, f) in self.l.fluxes(rho, pump_rate).into_iter().enumerate() {
            self.flux[k].push(f);
        }
        let n = self.l.dim();
        let trace: f64 = (0..n).map(|i| rho[i * n + i].re).sum();
        let inv = &mut self.invariants;
        inv.max_trace_drift = inv.max_trace_drift.max((trace - self.trace0).abs());
        if self.check {
            let m = from_row_major(rho, n);
            let herm = (&m - m.adjoint())
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            inv.max_hermiticity_error = inv.max_hermiticity_error.max(herm);
            inv.min_eigenvalue = inv.min_eigenvalue.min(min_hermitian_eigenvalue(&m));
        }
    }

    fn finish(
        self,
        accum: &[f64],
        steps: usize,
        rejected: usize,
        final_state: DensityMatrix,
    ) -> EmissionResult {
        let mut channel_integrals: BTreeMap<ChannelTag, f64> = BTreeMap::new();
        let mut channel_flux: BTreeMap<ChannelTag, Vec<f64>> = BTreeMap::new();
        for (k, tag) in self.tags.iter().enumerate() {
            *channel_integrals.entry(*tag).or_insert(0.0) += accum[k];
            let series = channel_flux
                .entry(*tag)
                .or_insert_with(|| vec![0.0; self.times.len()]);
            for (s, f) in series.iter_mut().zip(&self.flux[k]) {
                *s += f;
            }
        }
        let cavity_idx: Vec<usize> = (0..self.tags.len())
            .filter(|&k| self.tags[k].is_cavity_emission())
            .collect();
        let mut intensity = vec![0.0; self.times.len()];
        for &k in &cavity_idx {
            for (s, f) in intensity.iter_mut().zip(&self.flux[k]) {
                *s += f;
            }
        }
        let integral_ww = cavity_idx.iter().map(|&k| accum[k]).sum();
        let mean_emission_time = first_moment(&self.times, &intensity);
        let mut populations = BTreeMap::new();
        for ((name, _), v) in self.observables.iter().zip(self.values) {
            populations.insert(name.clone(), v);
        }
        EmissionResult {
            times: self.times,
            populations,
            channel_flux,
            intensity,
            integral_ww,
            mean_emission_time,
            channel_integrals,
            invariants: if self.check {
                self.invariants
            } else {
                InvariantSummary {
                    min_eigenvalue: f64::NAN,
                    max_hermiticity_error: f64::NAN,
                    ..self.invariants
                }
            },
            steps,
            rejected_steps: rejected,
            final_state,
        }
    }
}

/// ∫ t·f dt / ∫ f dt by the trapezoid rule; NaN when ∫ f dt = 0.
pub fn first_moment(t: &[f64], f: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for k in 1..t.len() {
        let h = t[k] - t[k - 1];
        num += 0.5 * h * (t[k] * f[k] + t[k - 1] * f[k - 1]);
        den += 0.5 * h * (f[k] + f[k - 1]);
    }
    if den == 0.0 {
        f64::NAN
    } else {
        num / den
    }
}

trait Stepper {
    /// Advance y from t0 to t1 with a constant pump rate.
    fn advance(&mut self, y: &mut Vec<Complex64>, t0: f64, t1: f64, pump: f64) -> Result<()>;
    fn counts(&self) -> (usize, usize);
}

// Dormand–Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

struct Rk45<'a> {
    l: &'a Liouvillian,
    cfg: &'a IntegratorConfig,
    h: Option<f64>,
    k: Vec<Vec<Complex64>>,
    tmp: Vec<Complex64>,
    fsal: bool,
    steps: usize,
    rejected: usize,
}

impl<'a> Rk45<'a> {
    fn new(l: &'a Liouvillian, cfg: &'a IntegratorConfig) -> Self {
        Self {
            l,
            cfg,
            h: None,
            k: Vec::new(),
            tmp: Vec::new(),
            fsal: false,
            steps: 0,
            rejected: 0,
        }
    }
}

impl Stepper for Rk45<'_> {
    fn advance(&mut self, y: &mut Vec<Complex64>, t0: f64, t1: f64, pump: f64) -> Result<()> {
        let m = y.len();
        if self.k.is_empty() {
            self.k = vec![vec![ZERO; m]; 7];
            self.tmp = vec![ZERO; m];
        }
        // the pump rate may have changed at t0
        self.fsal = false;
        let mut t = t0;
        let span = t1 - t0;
        let mut h_prop = match self.h {
            Some(h) => h,
            None => {
                self.l.augmented(y, pump, &mut self.k[0]);
                let fmax = self.k[0].iter().map(|z| z.norm()).fold(0.0, f64::max);
                let ymax = y.iter().map(|z| z.norm()).fold(0.0, f64::max);
                if fmax > 0.0 {
                    0.01 * ymax.max(self.cfg.abs_tol) / fmax
                } else {
                    span
                }
            }
        };
        while t < t1 {
            let remaining = t1 - t;
            let capped = h_prop.min(self.cfg.max_step);
            let (h, last) = if capped >= remaining {
                (remaining, true)
            } else {
                (capped, false)
            };
            if h <= 1e-14 * t1.abs().max(span) && !last {
                return Err(Error::StepSizeUnderflow { t, h });
            }
            if !self.fsal {
                self.l.augmented(y, pump, &mut self.k[0]);
            }
            for s in 1..7 {
                for i in 0..m {
                    let mut acc = y[i];
                    for (r, a) in A[s].iter().enumerate().take(s) {
                        if *a != 0.0 {
                            acc += self.k[r][i] * (h * a);
                        }
                    }
                    self.tmp[i] = acc;
                }
                let (_, tail) = self.k.split_at_mut(s);
                self.l.augmented(&self.tmp, pump, &mut tail[0]);
            }
            // tmp now holds the 5th-order solution
            let mut err = 0.0;
            for i in 0..m {
                let mut e = ZERO;
                for s in 0..7 {
                    let d = B5[s] - B4[s];
                    if d != 0.0 {
                        e += self.k[s][i] * (h * d);
                    }
                }
                let sc = self.cfg.abs_tol + self.cfg.rel_tol * y[i].norm().max(self.tmp[i].norm());
                let r = e.norm() / sc;
                err += r * r;
            }
            let err = (err / m as f64).sqrt();
            self.steps += 1;
            if self.steps > self.cfg.max_steps {
                return Err(Error::Tolerance(format!(
                    "step budget of {} exhausted at t = {t:e} s; the problem may be stiff (try the exponential method)",
                    self.cfg.max_steps
                )));
            }
            if err <= 1.0 {
                y.copy_from_slice(&self.tmp);
                self.k.swap(0, 6);
                self.fsal = true;
                t = if last { t1 } else { t + h };
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                let grown = h * factor;
                // a step shortened to land on t1 says little about the natural step
                h_prop = if last { capped.max(grown) } else { grown };
            } else {
                self.rejected += 1;
                self.fsal = false;
                h_prop = h * (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            }
        }
        self.h = Some(h_prop);
        Ok(())
    }

    fn counts(&self) -> (usize, usize) {
        (self.steps, self.rejected)
    }
}

struct Rk4<'a> {
    l: &'a Liouvillian,
    h: f64,
    k: Vec<Vec<Complex64>>,
    tmp: Vec<Complex64>,
    steps: usize,
    max_steps: usize,
}

impl<'a> Rk4<'a> {
    fn new(l: &'a Liouvillian, cfg: &IntegratorConfig) -> Self {
        Self {
            l,
            h: cfg.max_step,
            k: Vec::new(),
            tmp: Vec::new(),
            steps: 0,
            max_steps: cfg.max_steps,
        }
    }
}

impl Stepper for Rk4<'_> {
    fn advance(&mut self, y: &mut Vec<Complex64>, t0: f64, t1: f64, pump: f64) -> Result<()> {
        let m = y.len();
        if self.k.is_empty() {
            self.k = vec![vec![ZERO; m]; 4];
            self.tmp = vec![ZERO; m];
        }
        let nsub = ((t1 - t0) / self.h).ceil().max(1.0) as usize;
        let h = (t1 - t0) / nsub as f64;
        for _ in 0..nsub {
            self.l.augmented(y, pump, &mut self.k[0]);
            for (s, c) in [(1usize, 0.5), (2, 0.5), (3, 1.0)] {
                for i in 0..m {
                    self.tmp[i] = y[i] + self.k[s - 1][i] * (h * c);
                }
                let (_, tail) = self.k.split_at_mut(s);
                self.l.augmented(&self.tmp, pump, &mut tail[0]);
            }
            for i in 0..m {
                y[i] += (self.k[0][i] + self.k[1][i] * 2.0 + self.k[2][i] * 2.0 + self.k[3][i])
                    * (h / 6.0);
            }
            self.steps += 1;
            if self.steps > self.max_steps {
                return Err(Error::Tolerance(format!(
                    "step budget of {} exhausted",
                    self.max_steps
                )));
            }
        }
        Ok(())
    }

    fn counts(&self) -> (usize, usize) {
        (self.steps, 0)
    }
}

/// Generator of the augmented state restricted to the coherences ρ_ij that
/// can become nonzero starting from the support of ρ₀.
pub struct ReducedGenerator {
    n: usize,
    pairs: Vec<(usize, usize)>,
    nch: usize,
    g_static: CMatrix,
    g_pump: CMatrix,
}

impl ReducedGenerator {
    pub fn new(l: &Liouvillian, rho0: &[Complex64]) -> Self {
        let n = l.dim;
        // column lists: col[j] = [(i, v)] for nonzero M[i, j]
        let columns = |op: &SparseOp| {
            let mut cols = vec![Vec::new(); n];
            for &(i, j, v) in op.entries() {
                cols[j].push((i, v));
            }
            cols
        };
        let mut k_all = l.k_static.to_dense();
        k_all += l.k_pump.to_dense();
        let k_cols = columns(&SparseOp::from_dense(&k_all));
        let ks_cols = columns(&l.k_static);
        let kp_cols = columns(&l.k_pump);
        let op_cols: Vec<_> = l.channels.iter().map(|c| columns(&c.op)).collect();

        let mut index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut pairs = Vec::new();
        let mut queue = VecDeque::new();
        let visit = |p: (usize, usize),
                     index: &mut HashMap<_, _>,
                     pairs: &mut Vec<_>,
                     queue: &mut VecDeque<_>| {
            if let std::collections::hash_map::Entry::Vacant(e) = index.entry(p) {
                e.insert(pairs.len());
                pairs.push(p);
                queue.push_back(p);
            }
        };
        for i in 0..n {
            for j in 0..n {
                if rho0[i * n + j] != ZERO {
                    visit((i, j), &mut index, &mut pairs, &mut queue);
                }
            }
        }
        while let Some((i, j)) = queue.pop_front() {
            for &(r, _) in &k_cols[i] {
                visit((r, j), &mut index, &mut pairs, &mut queue);
            }
            for &(r, _) in &k_cols[j] {
                visit((i, r), &mut index, &mut pairs, &mut queue);
            }
            for cols in &op_cols {
                for &(r, _) in &cols[i] {
                    for &(s, _) in &cols[j] {
                        visit((r, s), &mut index, &mut pairs, &mut queue);
                    }
                }
            }
        }

        let np = pairs.len();
        let nch = l.channels.len();
        let dim = np + nch;
        let mut g_static = CMatrix::zeros(dim, dim);
        let mut g_pump = CMatrix::zeros(dim, dim);
        for (col, &(i, j)) in pairs.iter().enumerate() {
            let fill = |g: &mut CMatrix, kc: &Vec<Vec<(usize, Complex64)>>| {
                for &(r, v) in &kc[i] {
                    g[(index[&(r, j)], col)] += -I * v;
                }
                for &(r, v) in &kc[j] {
                    g[(index[&(i, r)], col)] += I * v.conj();
                }
            };
            fill(&mut g_static, &ks_cols);
            fill(&mut g_pump, &kp_cols);
            for (c, cols) in l.channels.iter().zip(&op_cols) {
                let (g, rate) = if c.pumped {
                    (&mut g_pump, 1.0)
                } else {
                    (&mut g_static, c.rate)
                };
                for &(r, v) in &cols[i] {
                    for &(s, w) in &cols[j] {
                        g[(index[&(r, s)], col)] += v * w.conj() * rate;
                    }
                }
            }
        }
        // accumulator rows: rate·Tr(Nρ) = rate Σ N[j,i] ρ_ij
        for (k, c) in l.channels.iter().enumerate() {
            let (g, rate) = if c.pumped {
                (&mut g_pump, 1.0)
            } else {
                (&mut g_static, c.rate)
            };
            for &(a, b, v) in c.number.entries() {
                // N[a,b] multiplies ρ_ba
                if let Some(&col) = index.get(&(b, a)) {
                    g[(np + k, col)] += v * rate;
                }
            }
        }
        Self {
            n,
            pairs,
            nch,
            g_static,
            g_pump,
        }
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn generator(&self, pump: f64) -> CMatrix {
        if pump == 0.0 {
            self.g_static.clone()
        } else {
            &self.g_static + &self.g_pump * Complex64::new(pump, 0.0)
        }
    }

    /// Reduced coordinates of the augmented state.
    pub fn gather(&self, y: &[Complex64]) -> crate::quantum::CVector {
        let n2 = self.n * self.n;
        let mut v = crate::quantum::CVector::zeros(self.pairs.len() + self.nch);
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            v[k] = y[i * self.n + j];
        }
        for c in 0..self.nch {
            v[self.pairs.len() + c] = y[n2 + c];
        }
        v
    }

    pub fn scatter(&self, v: &crate::quantum::CVector, y: &mut [Complex64]) {
        let n2 = self.n * self.n;
        y.iter_mut().for_each(|z| *z = ZERO);
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            y[i * self.n + j] = v[k];
        }
        for c in 0..self.nch {
            y[n2 + c] = v[self.pairs.len() + c];
        }
    }
}

struct Expo {
    gen: ReducedGenerator,
    cache: HashMap<(u64, u64), CMatrix>,
    steps: usize,
}

impl Expo {
    fn new(l: &Liouvillian, rho0: &[Complex64]) -> Self {
        Self {
            gen: ReducedGenerator::new(l, rho0),
            cache: HashMap::new(),
            steps: 0,
        }
    }
}

impl Stepper for Expo {
    fn advance(&mut self, y: &mut Vec<Complex64>, t0: f64, t1: f64, pump: f64) -> Result<()> {
        let dt = t1 - t0;
        let key = (pump.to_bits(), dt.to_bits());
        let gen = &self.gen;
        let prop = self
            .cache
            .entry(key)
            .or_insert_with(|| (gen.generator(pump) * Complex64::new(dt, 0.0)).exp());
        let v = gen.gather(y);
        let w = &*prop * v;
        gen.scatter(&w, y);
        self.steps += 1;
        Ok(())
    }

    fn counts(&self) -> (usize, usize) {
        (self.steps, 0)
    }
}

/// Channel probabilities for one cavity quality factor.
#[derive(Debug, Clone, Serialize)]
pub struct ChannelSweepPoint {
    pub q: f64,
    pub kappa: f64,
    /// Total probability emitted through each radiative and cavity channel.
    pub channel_integrals: BTreeMap<ChannelTag, f64>,
    /// Sum over radiative and cavity channels.
    pub total: f64,
}

impl ChannelSweepPoint {
    pub fn cavity(&self) -> f64 {
        self.channel_integrals
            .iter()
            .filter(|(t, _)| t.is_cavity_emission())
            .map(|(_, v)| v)
            .sum()
    }

    pub fn radiative(&self) -> BTreeMap<usize, f64> {
        self.channel_integrals
            .iter()
            .filter_map(|(t, v)| match t {
                ChannelTag::Radiative(j) => Some((*j, *v)),
                _ => None,
            })
            .collect()
    }
}

/// Starting from |e,0,0⟩ with the pump off, report the probability that
/// the excitation leaves through each radiative and cavity channel, for
/// every Q in `qs`.
pub fn channel_resolved_sweep(
    template: &SystemModel,
    qs: &[f64],
) -> Result<Vec<ChannelSweepPoint>> {
    if qs.is_empty() {
        return Err(Error::invalid("q", "empty Q grid"));
    }
    let results: Mutex<Vec<(usize, Result<ChannelSweepPoint>)>> = Mutex::new(Vec::new());
    qs.par_iter().enumerate().for_each(|(k, &q)| {
        let r = channel_point(template, q);
        results.lock().expect("poisoned").push((k, r));
    });
    let mut out = results.into_inner().expect("poisoned");
    out.sort_by_key(|(k, _)| *k);
    out.into_iter().map(|(_, r)| r).collect()
}

/// Emission integrals over an infinite horizon. Density-matrix elements
/// between states that still hold the excitation (atom excited or a cavity
/// photon) form a block that nothing outside feeds, so with X the time
/// integral of that block, G_bb X = −ρ_bb(0). Every emitting channel's
/// number operator lives on the block, which makes its integral a linear
/// functional of X.
fn channel_point(template: &SystemModel, q: f64) -> Result<ChannelSweepPoint> {
    let mut model = template.clone().with_pump(PumpPulse::off());
    model.cavity.q = q;
    model.validate()?;
    let kappa = kappa_from_q(&model.cavity)?;
    let l = Liouvillian::from_model(&model, Frame::Rotating)?;
    let rho0 = to_row_major(excited_state(&model)?.matrix());
    let gen = ReducedGenerator::new(&l, &rho0);
    let tags = l.channel_tags();

    let space = model.space();
    let (atom, cavity) = (space.factor_position(ATOM)?, space.factor_position(CAVITY)?);
    let ne = model.excited_position();
    let holds: Vec<bool> = (0..l.dim)
        .map(|i| {
            let d = space.digits_of(i);
            d[atom] == ne || d[cavity] > 0
        })
        .collect();
    let block: Vec<usize> = (0..gen.n_pairs())
        .filter(|&k| {
            let (i, j) = gen.pairs[k];
            holds[i] && holds[j]
        })
        .collect();
    let g = gen.generator(0.0);
    let np = gen.n_pairs();
    let g_bb = CMatrix::from_fn(block.len(), block.len(), |a, b| g[(block[a], block[b])]);
    let mut y = rho0.clone();
    y.extend(std::iter::repeat_n(ZERO, tags.len()));
    let v0 = gen.gather(&y);
    let rhs = crate::quantum::CVector::from_fn(block.len(), |a, _| -v0[block[a]]);
    let x = g_bb
        .lu()
        .solve(&rhs)
        .filter(|x| x.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
    let Some(x) = x else {
        return Err(Error::Regime(format!(
            "the excitation never leaves the emitter-cavity system at Q = {q:e} (no decay channel)"
        )));
    };

    let mut channel_integrals = BTreeMap::new();
    for (k, tag) in tags.iter().enumerate() {
        if !(matches!(tag, ChannelTag::Radiative(_)) || tag.is_cavity_emission()) {
            continue;
        }
        let v: Complex64 = block
            .iter()
            .enumerate()
            .map(|(a, &col)| g[(np + k, col)] * x[a])
            .sum();
        *channel_integrals.entry(*tag).or_insert(0.0) += v.re;
    }
    let total: f64 = channel_integrals.values().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::Tolerance(format!(
            "channel probabilities sum to {total} at Q = {q:e}"
        )));
    }
    Ok(ChannelSweepPoint {
        q,
        kappa,
        channel_integrals,
        total,
    })
}
