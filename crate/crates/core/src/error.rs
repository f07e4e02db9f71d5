use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("lifting backend unavailable (pseudo-3D fallback possible): {0}")]
    LifterUnavailable(String),

    #[error("inference backend error: {0}")]
    Inference(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("unsupported source: {0}")]
    UnsupportedSource(String),

    #[error("source not found or unreadable: {0}")]
    BadSource(String),

    #[error("malformed replay line {line}: {message}")]
    MalformedReplay { line: usize, message: String },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
