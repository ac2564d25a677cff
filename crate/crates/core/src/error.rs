use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid distribution: {0}")]
    InvalidDist(String),

    #[error("model validation failed: {0}")]
    Validation(String),

    #[error("integration left the simplex at t={time}: {reason}; retry with a smaller dt")]
    Integration { time: f64, reason: String },

    #[error("continuity equation infeasible: {0}")]
    Infeasible(String),

    #[error("continuity-equation residual {residual:e} exceeds tolerance {tol:e} on interval {interval}")]
    ContinuityViolation { interval: usize, residual: f64, tol: f64 },

    #[error("state space of size {size} exceeds the capacity limit {limit}")]
    Capacity { size: u128, limit: u128 },

    #[error("support mismatch: {0}")]
    SupportMismatch(String),

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { path: path.into(), message: message.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
