use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("path synthesis failed: {0}")]
    Synthesis(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("solution blew up at step {step} (|X| = {norm:e})")]
    Blowup { step: usize, norm: f64 },
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("{0}")]
    Config(String),
    #[error("malformed path file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
