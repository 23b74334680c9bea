use thiserror::Error;

/// Errors raised by model construction, configuration parsing and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown Hilbert-space factor `{0}`")]
    UnknownFactor(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("operands live on different Hilbert spaces")]
    SpaceMismatch,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("cannot parse quantity `{input}`: {reason}")]
    Unit { input: String, reason: String },

    #[error("step size underflow at t = {t:e} s (h = {h:e} s); the problem is too stiff for this method")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("integrator failed to meet tolerance: {0}")]
    Tolerance(String),

    #[error("trajectory norm underflow at t = {t:e} s without a bracketed jump")]
    NormUnderflow { t: f64 },

    #[error("unknown channel tag `{0}`")]
    UnknownChannel(String),

    #[error("time series too short: {0}")]
    SeriesTooShort(String),

    #[error("parameter regime violated: {0}")]
    Regime(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    /// True for failures caused by user input (as opposed to numerical breakdown).
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::UnknownFactor(_)
                | Error::DimensionMismatch { .. }
                | Error::SpaceMismatch
                | Error::InvalidParameter { .. }
                | Error::Config(_)
                | Error::Unit { .. }
                | Error::UnknownChannel(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
