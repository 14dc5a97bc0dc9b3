use thiserror::Error;

/// Errors raised while building or solving a structured low-rank problem.
#[derive(Debug, Error)]
pub enum StlsError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid structure: {0}")]
    InvalidStructure(String),

    #[error("invalid weight: {0}")]
    InvalidWeight(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("malformed input: {0}")]
    Input(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, StlsError>;
