use thiserror::Error;

#[derive(Debug, Error)]
pub enum HistorianError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("invalid: {0}")]
    Invalid(String),
    #[error("corrupt record in {path}: {reason}")]
    Corrupt { path: String, reason: String },
    #[error("storage error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = HistorianError> = std::result::Result<T, E>;
