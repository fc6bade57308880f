use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("numeric range exceeded: {0}")]
    NumericRange(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("matrix is not positive definite (jitter escalated to {jitter:e})")]
    NotPositiveDefinite { jitter: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("training failed after {restarts} restarts: {reason}")]
    TrainingFailed { restarts: usize, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
