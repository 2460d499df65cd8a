use thiserror::Error;

/// Errors raised across the engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("empty input: {0}")]
    EmptySet(&'static str),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("design outside the domain: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("index {index} out of range 1..={max}")]
    Index { index: usize, max: usize },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("model fit failed: {0}")]
    Fit(String),

    #[error("optimizer failed: {0}")]
    Optimizer(String),

    #[error("noise calibration failed: {0}")]
    Calibration(String),

    #[error("evidence has zero likelihood under every hypothesis")]
    InconsistentEvidence,

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension { expected, got });
    }
    Ok(())
}
