use std::path::PathBuf;

/// Errors produced by the pulsenet library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("integration step must be positive and finite, got {0}")]
    InvalidStep(f64),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("invalid layer dimensions {0:?}")]
    InvalidDims(Vec<usize>),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("all output neurons are silent")]
    DegenerateOutput,

    #[error("dataset mismatch: {0}")]
    DatasetMismatch(String),

    #[error("unknown scene class {0}")]
    UnknownClass(usize),

    #[error("malformed {what} at line {line}: {reason}")]
    Parse {
        what: &'static str,
        line: usize,
        reason: String,
    },

    #[error("I/O failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV output failed: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
