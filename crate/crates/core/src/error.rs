use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record at line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },

    #[error("duplicate id at line {line}: {id}")]
    DuplicateId { line: usize, id: String },

    #[error("invalid label at line {line}: {label} (expected 0 or 1)")]
    InvalidLabel { line: usize, label: i64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {stage}")]
    NonFinite { stage: String },

    #[error("missing cached intermediate: {0}")]
    MissingCache(&'static str),

    #[error("soft label {0} outside [0, 1]")]
    LabelRange(f64),

    #[error("matrix is not row-stochastic: {0}")]
    NotRowStochastic(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("checkpoint version mismatch: file has {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
