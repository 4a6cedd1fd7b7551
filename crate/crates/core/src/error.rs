use thiserror::Error;

use crate::spectra::Unit;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Total mechanical damping is non-positive (anti-damping wins).
    #[error(
        "parametric instability: total mechanical linewidth {gamma_total:e} rad/s is not positive"
    )]
    ParametricInstability { gamma_total: f64 },

    /// The coupled mode system has a pole on or above the real axis.
    #[error("unstable response: pole with growth rate {growth_rate:e} rad/s")]
    UnstablePole { growth_rate: f64 },

    #[error("unit mismatch: expected {expected:?}, found {found:?}")]
    UnitMismatch { expected: Unit, found: Unit },

    #[error("invalid trace: {0}")]
    InvalidTrace(String),

    /// No mechanical peak is resolved above the noise floor.
    #[error("no peak resolved: SNR {snr:.3} < 3 (peak height {height:e}, floor noise {noise:e})")]
    NoPeak { snr: f64, height: f64, noise: f64 },

    /// Two fit parameters cannot be separated by the data.
    #[error(
        "degenerate Jacobian: parameters `{first}` and `{second}` are not separately identifiable"
    )]
    DegenerateJacobian { first: String, second: String },

    #[error("invalid fit setup: {0}")]
    FitSetup(String),

    #[error("missing keys: {}", .0.join(", "))]
    MissingKeys(Vec<String>),

    #[error("unknown key `{0}`")]
    UnknownKey(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Inputs to the imprecision-backaction product violate the Heisenberg bound.
    #[error("inconsistent inputs: imprecision-backaction product {0:.4} ħ is below the Heisenberg limit of 1 ħ")]
    BelowHeisenberg(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
