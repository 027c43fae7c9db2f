use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the tensor kernels, the model graph and the stream engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("stream error: {0}")]
    State(String),

    #[error("weight container: {0}")]
    Container(String),

    #[error("wav: malformed header: {0}")]
    WavHeader(String),

    #[error("wav: unsupported encoding: {0}")]
    WavEncoding(String),

    #[error("wav: truncated data: expected {expected} bytes, found {found}")]
    WavTruncated { expected: usize, found: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
