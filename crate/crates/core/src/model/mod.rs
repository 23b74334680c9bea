//! NV-centre level scheme, cavity, pump and truncation, and the builders for
//! the Jaynes–Cummings Hamiltonian and the Lindblad channel list.
//!
//! Atomic basis ordering inside the `atom` factor: the retained ground
//! sublevels in ascending order, followed by the excited level `|e⟩`.

pub mod config;
pub mod presets;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantum::{destroy, kron_embed, transition, CMatrix, HilbertSpace, Operator, ONE};
use crate::units::{angular_frequency_from_wavelength, EPSILON_0, HBAR};

pub const ATOM: &str = "atom";
pub const CAVITY: &str = "cavity";
pub const WAVEGUIDE: &str = "waveguide";

/// Ground-manifold sublevels, the excited level, and the incoherent rates
/// connecting them. Energies are angular frequencies (rad/s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NVLevelScheme {
    pub ground_energies: Vec<f64>,
    pub excited_energy: f64,
    /// γ_{g_j e}, one per ground sublevel.
    pub radiative_rates: Vec<f64>,
    /// γ_{g_i g_{i+1}} (decay g_{i+1} → g_i), one per adjacent ground pair.
    pub phonon_rates: Vec<f64>,
    pub pl_lifetime: f64,
}

impl NVLevelScheme {
    pub fn new(
        ground_energies: Vec<f64>,
        excited_energy: f64,
        radiative_rates: Vec<f64>,
        phonon_rates: Vec<f64>,
        pl_lifetime: f64,
    ) -> Result<Self> {
        let scheme = Self {
            ground_energies,
            excited_energy,
            radiative_rates,
            phonon_rates,
            pl_lifetime,
        };
        scheme.validate()?;
        Ok(scheme)
    }

    /// One ground level and one excited level; all photoluminescence goes
    /// through the single radiative channel.
    pub fn two_level(zpl_wavelength: f64, pl_lifetime: f64) -> Result<Self> {
        Self::from_branching(zpl_wavelength, &[0.0], &[1.0], &[], pl_lifetime)
    }

    /// Build a scheme from ground-level offsets above `g_0` and relative
    /// branching weights, which are normalised so the radiative rates sum to
    /// `1/pl_lifetime`.
    pub fn from_branching(
        zpl_wavelength: f64,
        ground_offsets: &[f64],
        branching: &[f64],
        phonon_rates: &[f64],
        pl_lifetime: f64,
    ) -> Result<Self> {
        if branching.len() != ground_offsets.len() {
            return Err(Error::invalid(
                "branching",
                format!(
                    "{} weights given for {} ground sublevels",
                    branching.len(),
                    ground_offsets.len()
                ),
            ));
        }
        if !(pl_lifetime > 0.0) {
            return Err(Error::invalid("pl_lifetime", "must be positive"));
        }
        let total: f64 = branching.iter().sum();
        if !(total > 0.0) || branching.iter().any(|b| *b < 0.0 || !b.is_finite()) {
            return Err(Error::invalid(
                "branching",
                "weights must be non-negative with a positive sum",
            ));
        }
        let radiative_rates = branching.iter().map(|b| b / total / pl_lifetime).collect();
        let excited_energy = ground_offsets.first().copied().unwrap_or(0.0)
            + angular_frequency_from_wavelength(zpl_wavelength);
        Self::new(
            ground_offsets.to_vec(),
            excited_energy,
            radiative_rates,
            phonon_rates.to_vec(),
            pl_lifetime,
        )
    }

    pub fn n_ground(&self) -> usize {
        self.ground_energies.len()
    }

    pub fn n_atomic(&self) -> usize {
        self.n_ground() + 1
    }

    /// ω_e − ω_{g_i}.
    pub fn transition_frequency(&self, ground: usize) -> f64 {
        self.excited_energy - self.ground_energies[ground]
    }

    pub fn branching_ratios(&self) -> Vec<f64> {
        let total: f64 = self.radiative_rates.iter().sum();
        self.radiative_rates.iter().map(|g| g / total).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_ground();
        if n == 0 {
            return Err(Error::invalid(
                "levels",
                "at least one ground sublevel is required",
            ));
        }
        if self.radiative_rates.len() != n {
            return Err(Error::invalid(
                "radiative_rates",
                format!("expected {n} entries"),
            ));
        }
        if self.phonon_rates.len() != n - 1 {
            return Err(Error::invalid(
                "phonon_rates",
                format!("expected {} entries", n - 1),
            ));
        }
        let all_rates = self.radiative_rates.iter().chain(&self.phonon_rates);
        if all_rates.clone().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(Error::invalid(
                "rates",
                "all rates must be finite and non-negative",
            ));
        }
        if self.ground_energies.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid(
                "ground_energies",
                "must be strictly increasing",
            ));
        }
        if !(self.excited_energy > self.ground_energies[n - 1]) {
            return Err(Error::invalid(
                "excited_energy",
                "must lie above the ground manifold",
            ));
        }
        if !(self.pl_lifetime > 0.0) {
            return Err(Error::invalid("pl_lifetime", "must be positive"));
        }
        let sum: f64 = self.radiative_rates.iter().sum();
        let expected = 1.0 / self.pl_lifetime;
        let mismatch = if expected == 0.0 {
            sum != 0.0
        } else {
            ((sum - expected) / expected).abs() > 1e-9
        };
        if mismatch {
            return Err(Error::invalid(
                "radiative_rates",
                format!("sum {sum:e} 1/s differs from 1/pl_lifetime = {expected:e} 1/s"),
            ));
        }
        Ok(())
    }
}

/// Single-mode cavity. `volume` is in m³.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavityConfig {
    pub wavelength: f64,
    pub q: f64,
    pub volume: f64,
    pub refractive_index: f64,
    /// Index i of the ground sublevel whose |e⟩–|g_i⟩ transition the cavity addresses.
    pub resonant_transition: usize,
}

impl CavityConfig {
    pub fn omega(&self) -> f64 {
        angular_frequency_from_wavelength(self.wavelength)
    }
}

/// κ = ω_C / (2Q).
pub fn kappa_from_q(cavity: &CavityConfig) -> Result<f64> {
    if !(cavity.q > 0.0) {
        return Err(Error::invalid("q", "quality factor must be positive"));
    }
    if !(cavity.wavelength > 0.0) {
        return Err(Error::invalid("wavelength", "must be positive"));
    }
    Ok(cavity.omega() / (2.0 * cavity.q))
}

/// Ω_i = d_i [ω_C / (2ħε₀V)]^{1/2}.
pub fn coupling_from_dipole(dipole: f64, cavity: &CavityConfig) -> Result<f64> {
    if !(cavity.volume > 0.0) {
        return Err(Error::invalid("volume", "mode volume must be positive"));
    }
    if !(dipole >= 0.0) {
        return Err(Error::invalid("dipole", "must be non-negative"));
    }
    Ok(dipole * (cavity.omega() / (2.0 * HBAR * EPSILON_0 * cavity.volume)).sqrt())
}

/// Inverse of [`coupling_from_dipole`].
pub fn dipole_from_coupling(omega: f64, cavity: &CavityConfig) -> Result<f64> {
    if !(cavity.volume > 0.0) {
        return Err(Error::invalid("volume", "mode volume must be positive"));
    }
    Ok(omega / (cavity.omega() / (2.0 * HBAR * EPSILON_0 * cavity.volume)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PurcellFactor {
    pub factor: f64,
    /// Spontaneous coupling factor F_p / (1 + F_p).
    pub beta: f64,
}

/// F_p = 3(λ_C/n)³/(4π²) · Q/V.
pub fn purcell_factor(cavity: &CavityConfig) -> Result<PurcellFactor> {
    if !(cavity.volume > 0.0) {
        return Err(Error::invalid("volume", "mode volume must be positive"));
    }
    if !(cavity.q > 0.0) {
        return Err(Error::invalid("q", "quality factor must be positive"));
    }
    let reduced = cavity.wavelength / cavity.refractive_index;
    let factor = 3.0 * reduced.powi(3) / (4.0 * PI * PI) * cavity.q / cavity.volume;
    Ok(PurcellFactor {
        factor,
        beta: factor / (1.0 + factor),
    })
}

/// How Ω_i enters the Hamiltonian.
///
/// `MatrixElement`: ⟨e,n|H|g_i,n+1⟩ = Ω_i √(n+1); the closed-form photon
/// statistics and damping-rate formulas in [`crate::analysis`] are exact in
/// this convention. `HalfRabi`: the coupling carries an explicit ½, so Ω_i is
/// the vacuum Rabi frequency and ⟨σ_ee⟩ = cos²(Ω_i t / 2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingConvention {
    #[default]
    MatrixElement,
    HalfRabi,
}

impl CouplingConvention {
    pub fn prefactor(self) -> f64 {
        match self {
            CouplingConvention::MatrixElement => 1.0,
            CouplingConvention::HalfRabi => 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingSpec {
    /// Ω_i in rad/s, one per ground sublevel of the full scheme.
    pub omegas: Vec<f64>,
    #[serde(default)]
    pub convention: CouplingConvention,
}

/// Top-hat incoherent pump: r(t) = r0 on [t_start, t_start + width] (mod rep_period).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpPulse {
    pub r0: f64,
    pub width: f64,
    pub t_start: f64,
    pub rep_period: Option<f64>,
}

impl PumpPulse {
    pub fn single(r0: f64, width: f64) -> Self {
        Self {
            r0,
            width,
            t_start: 0.0,
            rep_period: None,
        }
    }

    pub fn off() -> Self {
        Self::single(0.0, 1e-12)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r0 >= 0.0) || !self.r0.is_finite() {
            return Err(Error::invalid(
                "r0",
                "absorption rate must be finite and non-negative",
            ));
        }
        if !(self.width > 0.0) {
            return Err(Error::invalid("width", "pulse width must be positive"));
        }
        if !(self.t_start >= 0.0) {
            return Err(Error::invalid("t_start", "must be non-negative"));
        }
        if let Some(p) = self.rep_period {
            if !(p > self.width) {
                return Err(Error::invalid("rep_period", "must exceed the pulse width"));
            }
        }
        Ok(())
    }

    pub fn rate_at(&self, t: f64) -> f64 {
        if self.is_on(t) {
            self.r0
        } else {
            0.0
        }
    }

    pub fn is_on(&self, t: f64) -> bool {
        if t < self.t_start {
            return false;
        }
        let local = match self.rep_period {
            Some(p) => (t - self.t_start) % p,
            None => t - self.t_start,
        };
        local <= self.width
    }

    /// Pump switching times strictly inside (t0, t1), ascending.
    pub fn edges(&self, t0: f64, t1: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut push = |t: f64| {
            if t > t0 && t < t1 {
                out.push(t);
            }
        };
        match self.rep_period {
            None => {
                push(self.t_start);
                push(self.t_start + self.width);
            }
            Some(p) => {
                let first = ((t0 - self.t_start) / p).floor().max(0.0) as u64;
                let mut k = first;
                loop {
                    let on = self.t_start + k as f64 * p;
                    if on >= t1 {
                        break;
                    }
                    push(on);
                    push(on + self.width);
                    k += 1;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    /// Cavity Fock cutoff N_C (states 0..=N_C).
    pub n_cavity: usize,
    /// Waveguide Fock cutoff N_W; 0 removes the waveguide mode.
    pub n_waveguide: usize,
    /// Retained ground sublevels; `None` keeps all of them.
    pub ground_levels: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemModel {
    pub scheme: NVLevelScheme,
    pub cavity: CavityConfig,
    pub coupling: CouplingSpec,
    pub pump: PumpPulse,
    pub truncation: Truncation,
}

/// Frame in which the Hamiltonian is written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Frame {
    Lab,
    /// Rotating at ω_C: diagonal energies become detunings from the
    /// cavity-resonant transition.
    #[default]
    Rotating,
}

impl SystemModel {
    pub fn new(
        scheme: NVLevelScheme,
        cavity: CavityConfig,
        coupling: CouplingSpec,
        pump: PumpPulse,
        truncation: Truncation,
    ) -> Result<Self> {
        let model = Self {
            scheme,
            cavity,
            coupling,
            pump,
            truncation,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        self.scheme.validate()?;
        self.pump.validate()?;
        kappa_from_q(&self.cavity)?;
        if !(self.cavity.volume > 0.0) {
            return Err(Error::invalid("volume", "mode volume must be positive"));
        }
        if !(self.cavity.refractive_index > 0.0) {
            return Err(Error::invalid("refractive_index", "must be positive"));
        }
        let n = self.scheme.n_ground();
        if self.coupling.omegas.len() != n {
            return Err(Error::invalid(
                "omegas",
                format!(
                    "{} couplings given for {n} ground sublevels",
                    self.coupling.omegas.len()
                ),
            ));
        }
        if self
            .coupling
            .omegas
            .iter()
            .any(|w| !(*w >= 0.0) || !w.is_finite())
        {
            return Err(Error::invalid(
                "omegas",
                "couplings must be finite and non-negative",
            ));
        }
        if self.truncation.n_cavity < 1 {
            return Err(Error::invalid(
                "n_cavity",
                "cavity cutoff must be at least 1",
            ));
        }
        if self.cavity.resonant_transition >= n {
            return Err(Error::invalid(
                "resonant_transition",
                "no such ground sublevel",
            ));
        }
        let retained = self.retained_ground();
        if retained.is_empty() {
            return Err(Error::invalid(
                "ground_levels",
                "at least one ground sublevel must be retained",
            ));
        }
        if retained.windows(2).any(|w| w[1] <= w[0]) || retained.iter().any(|&g| g >= n) {
            return Err(Error::invalid(
                "ground_levels",
                "must be ascending, unique and in range",
            ));
        }
        if retained[0] != 0 {
            return Err(Error::invalid(
                "ground_levels",
                "the pumped level g_0 must be retained",
            ));
        }
        if !retained.contains(&self.cavity.resonant_transition) {
            return Err(Error::invalid(
                "ground_levels",
                "the cavity-resonant ground sublevel must be retained",
            ));
        }
        Ok(())
    }

    pub fn retained_ground(&self) -> Vec<usize> {
        match &self.truncation.ground_levels {
            Some(levels) => levels.clone(),
            None => (0..self.scheme.n_ground()).collect(),
        }
    }

    pub fn atom_dim(&self) -> usize {
        self.retained_ground().len() + 1
    }

    /// Position of ground sublevel `g` inside the atom factor.
    pub fn ground_position(&self, g: usize) -> Option<usize> {
        self.retained_ground().iter().position(|&x| x == g)
    }

    pub fn excited_position(&self) -> usize {
        self.atom_dim() - 1
    }

    pub fn space(&self) -> HilbertSpace {
        HilbertSpace::new([
            (ATOM, self.atom_dim()),
            (CAVITY, self.truncation.n_cavity + 1),
            (WAVEGUIDE, self.truncation.n_waveguide + 1),
        ])
        .expect("factor dimensions are positive")
    }

    /// Basis index of |g_level or e, n_C, n_W⟩. `atom = None` selects |e⟩.
    pub fn basis_index(
        &self,
        ground: Option<usize>,
        n_cavity: usize,
        n_waveguide: usize,
    ) -> Result<usize> {
        let atom = match ground {
            Some(g) => self
                .ground_position(g)
                .ok_or_else(|| Error::invalid("ground", format!("sublevel {g} not retained")))?,
            None => self.excited_position(),
        };
        self.space().index_of(&[atom, n_cavity, n_waveguide])
    }

    pub fn kappa(&self) -> f64 {
        kappa_from_q(&self.cavity).expect("validated cavity")
    }

    pub fn with_pump(mut self, pump: PumpPulse) -> Self {
        self.pump = pump;
        self
    }
}

/// Jaynes–Cummings Hamiltonian of the retained levels (ħ = 1, rad/s).
pub fn build_hamiltonian(model: &SystemModel, frame: Frame) -> Result<Operator> {
    model.validate()?;
    let space = model.space();
    let retained = model.retained_ground();
    let na = model.atom_dim();
    let ne = model.excited_position();
    let scheme = &model.scheme;
    let omega_c = model.cavity.omega();

    let (ground_shift, excited_energy, cavity_energy) = match frame {
        Frame::Lab => (0.0, scheme.excited_energy, omega_c),
        Frame::Rotating => {
            let reference = scheme.ground_energies[model.cavity.resonant_transition];
            let detuning = scheme.transition_frequency(model.cavity.resonant_transition) - omega_c;
            (reference, reference + detuning, 0.0)
        }
    };

    let mut atom_diag = CMatrix::zeros(na, na);
    for (pos, &g) in retained.iter().enumerate() {
        atom_diag[(pos, pos)] = Complex64::new(scheme.ground_energies[g] - ground_shift, 0.0);
    }
    atom_diag[(ne, ne)] = Complex64::new(excited_energy - ground_shift, 0.0);
    let mut h = kron_embed(&atom_diag, ATOM, &space)?.into_matrix();

    let a = kron_embed(&destroy(model.truncation.n_cavity + 1), CAVITY, &space)?.into_matrix();
    if cavity_energy != 0.0 {
        h += (a.adjoint() * &a) * Complex64::new(cavity_energy, 0.0);
    }

    let pref = model.coupling.convention.prefactor();
    let a_dag = a.adjoint();
    for (pos, &g) in retained.iter().enumerate() {
        let omega = model.coupling.omegas[g];
        if omega == 0.0 {
            continue;
        }
        let lower = kron_embed(&transition(na, pos, ne), ATOM, &space)?.into_matrix();
        let term = &a_dag * &lower;
        h += (&term + term.adjoint()) * Complex64::new(pref * omega, 0.0);
    }
    Operator::new(space, h)
}

/// Origin of a dissipative channel. `Display`/`FromStr` give the stable text
/// tags used in output files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ChannelTag {
    /// Radiative decay |e⟩ → |g_j⟩ into non-cavity modes (`radiative:jPL`).
    Radiative(usize),
    /// Incoherent pump |g_0⟩ → |e⟩.
    Pump,
    /// Phonon relaxation |g_{i+1}⟩ → |g_i⟩ (`phonon:i`).
    Phonon(usize),
    /// Cavity photon transferred to the waveguide mode, √κ b†a.
    CavityOut,
    /// Cavity photon loss √κ a when the waveguide mode is truncated away.
    CavityLoss,
}

impl ChannelTag {
    /// True for the channels that represent a photon leaving through the cavity.
    pub fn is_cavity_emission(self) -> bool {
        matches!(self, ChannelTag::CavityOut | ChannelTag::CavityLoss)
    }
}

impl fmt::Display for ChannelTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChannelTag::Radiative(j) => write!(f, "radiative:{j}PL"),
            ChannelTag::Pump => f.write_str("pump"),
            ChannelTag::Phonon(i) => write!(f, "phonon:{i}"),
            ChannelTag::CavityOut => f.write_str("cavity-out"),
            ChannelTag::CavityLoss => f.write_str("cavity-loss"),
        }
    }
}

impl FromStr for ChannelTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownChannel(s.to_string());
        match s {
            "pump" => Ok(ChannelTag::Pump),
            "cavity-out" => Ok(ChannelTag::CavityOut),
            "cavity-loss" => Ok(ChannelTag::CavityLoss),
            _ => {
                if let Some(rest) = s.strip_prefix("radiative:") {
                    let j = rest.strip_suffix("PL").ok_or_else(unknown)?;
                    j.parse().map(ChannelTag::Radiative).map_err(|_| unknown())
                } else if let Some(rest) = s.strip_prefix("phonon:") {
                    rest.parse().map(ChannelTag::Phonon).map_err(|_| unknown())
                } else {
                    Err(unknown())
                }
            }
        }
    }
}

impl Serialize for ChannelTag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Lindblad channel `rate(t) · L[operator]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub operator: Operator,
    /// Constant rate, or the peak rate r0 for the pump.
    pub rate: f64,
    pub tag: ChannelTag,
    /// Time dependence; present only on the pump channel.
    pub pulse: Option<PumpPulse>,
}

impl Channel {
    pub fn rate_at(&self, t: f64) -> f64 {
        match &self.pulse {
            Some(p) => p.rate_at(t),
            None => self.rate,
        }
    }
}

/// All channels with a nonzero rate, in a fixed order: radiative, pump,
/// phonon, cavity.
pub fn build_channels(model: &SystemModel) -> Result<Vec<Channel>> {
    model.validate()?;
    let space = model.space();
    let retained = model.retained_ground();
    let na = model.atom_dim();
    let ne = model.excited_position();
    let mut channels = Vec::new();

    let atom_op = |i: usize, j: usize| -> Result<Operator> {
        kron_embed(&transition(na, i, j), ATOM, &space)
    };

    for (pos, &g) in retained.iter().enumerate() {
        let rate = model.scheme.radiative_rates[g];
        if rate > 0.0 {
            channels.push(Channel {
                operator: atom_op(pos, ne)?,
                rate,
                tag: ChannelTag::Radiative(g),
                pulse: None,
            });
        }
    }

    if model.pump.r0 > 0.0 {
        channels.push(Channel {
            operator: atom_op(ne, 0)?,
            rate: model.pump.r0,
            tag: ChannelTag::Pump,
            pulse: Some(model.pump),
        });
    }

    for (pos, pair) in retained.windows(2).enumerate() {
        let (lo, hi) = (pair[0], pair[1]);
        if hi != lo + 1 {
            continue;
        }
        let rate = model.scheme.phonon_rates[lo];
        if rate > 0.0 {
            channels.push(Channel {
                operator: atom_op(pos, pos + 1)?,
                rate,
                tag: ChannelTag::Phonon(lo),
                pulse: None,
            });
        }
    }

    let kappa = model.kappa();
    let a = kron_embed(&destroy(model.truncation.n_cavity + 1), CAVITY, &space)?;
    let (operator, tag) = if model.truncation.n_waveguide > 0 {
        let b = kron_embed(
            &destroy(model.truncation.n_waveguide + 1),
            WAVEGUIDE,
            &space,
        )?;
        (b.adjoint().compose(&a)?, ChannelTag::CavityOut)
    } else {
        (a, ChannelTag::CavityLoss)
    };
    channels.push(Channel {
        operator,
        rate: kappa,
        tag,
        pulse: None,
    });
    Ok(channels)
}

/// Total excitation number: atomic excitation plus cavity and waveguide quanta.
pub fn excitation_number(model: &SystemModel) -> Result<Operator> {
    let space = model.space();
    let ne = model.excited_position();
    let see = kron_embed(&transition(model.atom_dim(), ne, ne), ATOM, &space)?;
    let a = kron_embed(&destroy(model.truncation.n_cavity + 1), CAVITY, &space)?;
    let b = kron_embed(
        &destroy(model.truncation.n_waveguide + 1),
        WAVEGUIDE,
        &space,
    )?;
    see.add(&a.adjoint().compose(&a)?)?
        .add(&b.adjoint().compose(&b)?)
}

/// |i⟩⟨i| for the given basis index.
pub fn basis_projector(space: &HilbertSpace, index: usize) -> Operator {
    let n = space.total_dim();
    let mut m = CMatrix::zeros(n, n);
    m[(index, index)] = ONE;
    Operator::new(space.clone(), m).expect("square")
}
