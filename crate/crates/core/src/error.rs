use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("attribute index {index} out of range for {count} attributes")]
    AttributeIndex { index: usize, count: usize },

    #[error("unknown attribute `{0}`")]
    UnknownAttribute(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("training diverged at epoch {epoch}, iteration {iteration}: loss = {loss}")]
    Diverged { epoch: u32, iteration: u64, loss: f64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported image format: {0}")]
    UnsupportedImage(String),

    #[error("malformed image: {0}")]
    MalformedImage(String),

    #[error("checkpoint version mismatch: expected `AFM1`, found `{0}`")]
    CheckpointVersion(String),

    #[error("checkpoint weights truncated: expected {expected} floats, found {found} bytes")]
    CheckpointTruncated { expected: usize, found: usize },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("architecture mismatch: {0}")]
    Architecture(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
