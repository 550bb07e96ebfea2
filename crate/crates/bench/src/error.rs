use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Model(#[from] modalpath::Error),

    #[error("validation failed: {0}")]
    Validation(String),
}

impl BenchError {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => 2,
            BenchError::Io(_) | BenchError::Csv(_) => 3,
            BenchError::Validation(_) => 4,
            BenchError::Model(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, BenchError>;
