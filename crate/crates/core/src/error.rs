use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("argument {value} outside domain: {reason}")]
    OutOfDomain { value: f64, reason: &'static str },

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("integration step {dt:e} s must be below 0.1 * tau_ph = {limit:e} s")]
    StepTooLarge { dt: f64, limit: f64 },

    #[error("period {period:e} s is not a multiple of dt {dt:e} s (rounding error {err:e} s)")]
    GridMismatch { period: f64, dt: f64, err: f64 },

    #[error("warm-up did not reach a periodic orbit after {periods} periods (relative change {change:e})")]
    NotPeriodic { periods: usize, change: f64 },

    #[error("fit did not converge: {0}")]
    NoConvergence(String),

    #[error("{0}")]
    Unattainable(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
