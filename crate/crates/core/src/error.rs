use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("backward requested before any forward pass was recorded")]
    NotRecorded,

    #[error("gradients were not populated for parameter `{0}` before the optimizer step")]
    MissingGradients(String),

    #[error("duplicate parameter name `{0}`")]
    DuplicateParameter(String),

    #[error("{path}:{row}: {detail}")]
    Parse { path: PathBuf, row: usize, detail: String },

    #[error("model format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("checksum mismatch: model payload is corrupt or truncated")]
    Checksum,

    #[error("malformed model file: {0}")]
    Format(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape { op, detail: detail.into() }
    }

    pub(crate) fn invalid(detail: impl Into<String>) -> Self {
        Error::InvalidArgument(detail.into())
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, row: usize, detail: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), row, detail: detail.into() }
    }
}
