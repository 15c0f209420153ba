use thiserror::Error;

/// Unified error type for the laboratory.
///
/// Numerical routines return structured variants so callers can distinguish
/// recoverable protocol events (overflow inside a blow-up run) from genuine
/// misuse (mismatched grids, out-of-range parameters).
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite sample at flat index {index}: {value}")]
    NonFinite { index: usize, value: f64 },

    #[error("spectral data is not conjugate-symmetric: imaginary residue {residual:.3e} exceeds {tolerance:.3e}")]
    SymmetryViolation { residual: f64, tolerance: f64 },

    #[error("fields live on different grids: {left} vs {right}")]
    GridMismatch { left: String, right: String },

    #[error("parameter `{name}` out of range: {message}")]
    Parameter { name: String, message: String },

    #[error("kernel profile is not non-increasing past r = {radius}: K({radius}) < K({larger})")]
    NonMonotoneKernel { radius: f64, larger: f64 },

    #[error("kernel table: {message}")]
    KernelTable { message: String },

    #[error("field overflowed at t = {t:.6e} (last finite sup {sup:.3e}); treat as blow-up")]
    Overflow { t: f64, sup: f64 },

    #[error("fixed-point iteration failed to contract after {halvings} horizon halvings (last ratio {last_ratio:.3})")]
    NoContraction { halvings: u32, last_ratio: f64 },

    #[error("stored trajectory too coarse for the requested horizons: snapshot interval must be <= {required:.6e} (have {have:.6e})")]
    NeedsDenserTrajectory { required: f64, have: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn parameter(name: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parameter {
            name: name.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
