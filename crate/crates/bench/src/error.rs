use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: u64, msg: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("dataset '{0}' has no series left after filtering")]
    EmptyDataset(String),

    #[error("{failed} of {total} model fits failed, above the {threshold} threshold")]
    TooManyFailures { failed: usize, total: usize, threshold: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Model(#[from] tweedie_gp::Error),
}

impl BenchError {
    /// Process exit code: 1 configuration, 2 data, 3 too many training
    /// failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 1,
            BenchError::TooManyFailures { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
