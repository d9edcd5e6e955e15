use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("format error in {}: {msg}", file.display())]
    Format { file: PathBuf, msg: String },

    #[error("incompatible data: {0}")]
    Incompatible(String),

    #[error("average precision is undefined: no relevant item for class {0} in the index")]
    UndefinedAveragePrecision(usize),

    #[error("non-finite value in {stage} at epoch {epoch}, batch {batch}: {what}")]
    NonFinite {
        stage: &'static str,
        epoch: usize,
        batch: usize,
        what: String,
    },

    #[error("file not found: {}", .0.display())]
    NotFound(PathBuf),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn format_err(file: impl Into<PathBuf>, msg: impl Into<String>) -> Error {
    Error::Format {
        file: file.into(),
        msg: msg.into(),
    }
}
