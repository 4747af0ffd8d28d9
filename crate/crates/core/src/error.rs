use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum OodError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("degenerate density proxy: {0}")]
    DegenerateDensity(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("model blob error: {0}")]
    Blob(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, OodError>;

pub(crate) fn invalid(msg: impl Into<String>) -> OodError {
    OodError::InvalidArgument(msg.into())
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(OodError::DimensionMismatch { expected, got })
    }
}
