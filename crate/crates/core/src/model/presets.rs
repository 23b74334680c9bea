//! Ready-made models used by tests, benches and the example configs.

use super::{
    kappa_from_q, CavityConfig, CouplingConvention, CouplingSpec, NVLevelScheme, PumpPulse,
    SystemModel, Truncation,
};
use crate::units::{ELEMENTARY_CHARGE, HBAR};

pub const ZPL_WAVELENGTH: f64 = 638e-9;
pub const PL_LIFETIME: f64 = 11.6e-9;
pub const REFERENCE_Q: f64 = 36_500.0;
pub const DIAMOND_INDEX: f64 = 2.4;
pub const KAPPA_OVER_OMEGA: f64 = 2.5;
pub const PUMP_RATE: f64 = 1e13;
pub const PUMP_WIDTH: f64 = 0.56e-12;

/// Q = 36500 cavity at the ZPL with V = λ³ (free-space wavelength).
pub fn reference_cavity() -> CavityConfig {
    CavityConfig {
        wavelength: ZPL_WAVELENGTH,
        q: REFERENCE_Q,
        volume: ZPL_WAVELENGTH.powi(3),
        refractive_index: DIAMOND_INDEX,
        resonant_transition: 0,
    }
}

/// Ω₀ fixed by κ = 2.5 Ω₀ for the reference cavity.
pub fn reference_coupling() -> f64 {
    kappa_from_q(&reference_cavity()).expect("reference cavity") / KAPPA_OVER_OMEGA
}

/// Two-level emitter on the ZPL in the reference cavity, single 0.56 ps pump pulse.
pub fn two_level(n_cavity: usize, n_waveguide: usize) -> SystemModel {
    SystemModel::new(
        NVLevelScheme::two_level(ZPL_WAVELENGTH, PL_LIFETIME).expect("two-level scheme"),
        reference_cavity(),
        CouplingSpec {
            omegas: vec![reference_coupling()],
            convention: CouplingConvention::MatrixElement,
        },
        PumpPulse::single(PUMP_RATE, PUMP_WIDTH),
        Truncation {
            n_cavity,
            n_waveguide,
            ground_levels: None,
        },
    )
    .expect("two-level model")
}

/// Illustrative branching weights: a Poisson phonon progression with
/// Huang–Rhys factor 3.5 over ten ground sublevels. Not measured data.
pub fn illustrative_branching() -> Vec<f64> {
    let s: f64 = 3.5;
    let mut w = Vec::with_capacity(10);
    let mut term = (-s).exp();
    for j in 0..10 {
        w.push(term);
        term *= s / (j + 1) as f64;
    }
    w
}

/// Eleven-level illustrative model: ten ground sublevels 65 meV apart,
/// Poisson branching, 1 THz phonon relaxation, and couplings scaled as the
/// square root of the branching weight with the ZPL coupling at Ω₀.
pub fn nv_illustrative(n_cavity: usize, n_waveguide: usize) -> SystemModel {
    let spacing = 65e-3 * ELEMENTARY_CHARGE / HBAR;
    let offsets: Vec<f64> = (0..10).map(|j| j as f64 * spacing).collect();
    let branching = illustrative_branching();
    let scheme = NVLevelScheme::from_branching(
        ZPL_WAVELENGTH,
        &offsets,
        &branching,
        &[1e12; 9],
        PL_LIFETIME,
    )
    .expect("illustrative scheme");
    let omega0 = reference_coupling();
    let omegas = branching
        .iter()
        .map(|b| omega0 * (b / branching[0]).sqrt())
        .collect();
    SystemModel::new(
        scheme,
        reference_cavity(),
        CouplingSpec {
            omegas,
            convention: CouplingConvention::MatrixElement,
        },
        PumpPulse::single(PUMP_RATE, PUMP_WIDTH),
        Truncation {
            n_cavity,
            n_waveguide,
            ground_levels: None,
        },
    )
    .expect("illustrative model")
}
