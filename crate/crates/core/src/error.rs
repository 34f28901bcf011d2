use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no frames found in {0}")]
    NoFrames(PathBuf),
    #[error("frame {index}: {message}")]
    Frame { index: u64, message: String },
    #[error("frame {index}: dimensions {got_w}x{got_h} differ from sequence {want_w}x{want_h}")]
    DimensionMismatch {
        index: u64,
        want_w: usize,
        want_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("frame index {got} is not after previous index {prev}")]
    OutOfOrder { prev: u64, got: u64 },
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("descriptor dimension mismatch: model expects {expected}, got {got}")]
    Dimensionality { expected: usize, got: usize },
    #[error("numerical failure: {0}")]
    Numeric(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of a numerical routine rather than of the input data.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
