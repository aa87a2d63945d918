use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("image error at {path}: {message}")]
    Image { path: PathBuf, message: String },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint config hash {found} does not match expected {expected}")]
    ConfigMismatch { expected: String, found: String },

    #[error("non-finite loss at epoch {epoch}, step {step}: {diagnostic}")]
    NonFinite {
        epoch: usize,
        step: usize,
        diagnostic: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
