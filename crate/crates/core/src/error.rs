use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = LedaError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LedaError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("data error in {path}: {message}")]
    Data { path: PathBuf, message: String },

    #[error("{0}")]
    Dataset(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("backward already ran on this tape; reset gradients first")]
    BackwardTwice,

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl LedaError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        LedaError::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn data(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        LedaError::Data {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LedaError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            LedaError::Config(_) | LedaError::InvalidArgument(_) => 2,
            LedaError::Data { .. }
            | LedaError::Dataset(_)
            | LedaError::Io { .. }
            | LedaError::Format(_) => 3,
            LedaError::NonFinite(_) | LedaError::Shape { .. } | LedaError::BackwardTwice => 4,
        }
    }
}
