use std::path::PathBuf;

use swinct_tensor::io::FormatError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CtError {
    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] swinct_core::CoreError),
}

pub type Result<T> = std::result::Result<T, CtError>;

impl CtError {
    pub(crate) fn data(msg: impl Into<String>) -> Self {
        CtError::Data(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CtError::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, source: FormatError) -> Self {
        CtError::Format { path: path.into(), source }
    }
}
