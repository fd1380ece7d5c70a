use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("feature index {index} out of range 1..={max}")]
    FeatureIndex { index: usize, max: usize },

    #[error("invalid architecture: {0}")]
    Architecture(String),

    #[error("shape mismatch: expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("architecture mismatch: {0} vs {1}")]
    SpecMismatch(String, String),

    #[error("non-finite parameter {index} after step {step}")]
    NonFinite { index: usize, step: u64 },

    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("config field `{field}`: {msg}")]
    Invalid { field: String, msg: String },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("truth file: {0}")]
    Truth(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("all {0} pairs failed")]
    AllPairsFailed(usize),
}

impl Error {
    pub(crate) fn invalid(field: &str, msg: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.to_string(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
