use std::path::PathBuf;

use swinct_tensor::io::FormatError;
use swinct_tensor::TensorError;

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum CoreError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("usage: {0}")]
    Usage(String),
    #[error("integer overflow while evaluating {0}")]
    Overflow(&'static str),
    #[error("non-finite {what} at step {step}{}", param.as_deref().map(|p| format!(" in parameter `{p}`")).unwrap_or_default())]
    NonFinite {
        what: &'static str,
        step: u64,
        param: Option<String>,
        diagnostic: Option<PathBuf>,
    },
    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

impl CoreError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        CoreError::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        CoreError::Data(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io { path: path.into(), source }
    }
}
