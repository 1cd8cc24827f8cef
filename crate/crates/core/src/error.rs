use thiserror::Error;

/// Errors raised by the solvers, estimators and configuration layer.
#[derive(Debug, Error)]
pub enum OpoError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("noise stream misaligned: expected counter {expected}, got {actual}")]
    StreamMisaligned { expected: u64, actual: u64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("run mismatch: {0}")]
    Mismatch(String),

    #[error("snapshot format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, OpoError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(OpoError::Domain(msg.into()))
}
