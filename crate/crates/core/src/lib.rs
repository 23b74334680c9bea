//! Cavity-coupled NV-centre single-photon source: master-equation and
//! quantum-trajectory solvers, closed-form photon statistics, and an HBT
//! coincidence simulator.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Stage loops in the integrators read better with explicit indices.
#![allow(clippy::needless_range_loop)]

pub mod analysis;
pub mod error;
pub mod hbt;
pub mod io;
pub mod mcsolve;
pub mod mesolve;
pub mod model;
pub mod quantum;
pub mod units;

pub use analysis::{
    closed_form_stats, emission_spectrum, overall_damping_rate, pulse_param_sweep, PhotonStats,
    SpectrumConvention, SpectrumResult,
};
pub use error::{Error, Result};
pub use hbt::{
    photon_number_per_trigger, simulate_hbt, CorrelationHistogram, HBTConfig, HBTResult,
};
pub use mcsolve::{ensemble_average, EnsembleResult, Jump, TrajectoryRecord};
pub use mesolve::{channel_resolved_sweep, integrate, EmissionResult, IntegratorConfig, Method};
pub use model::{
    build_channels, build_hamiltonian, kappa_from_q, purcell_factor, CavityConfig, Channel,
    ChannelTag, CouplingConvention, CouplingSpec, Frame, NVLevelScheme, PumpPulse, SystemModel,
    Truncation,
};
pub use quantum::{DensityMatrix, HilbertSpace, Operator, StateVector};
