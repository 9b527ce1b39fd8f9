use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image: {0}")]
    CorruptImage(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid quantization table file: {0}")]
    Schema(String),
    #[error("value out of range: {0}")]
    Range(String),
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("image too small: {width}x{height}, need at least {min} on each side")]
    TooSmall { width: usize, height: usize, min: usize },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("block count mismatch: expected {expected}, got {got}")]
    BlockCountMismatch { expected: usize, got: usize },
    #[error("invalid plane: {0}")]
    InvalidPlane(String),
    #[error("invalid optimizer configuration: {0}")]
    InvalidConfig(String),
    #[error("candidate {0} has not been evaluated")]
    UnevaluatedCandidate(usize),
    #[error("selection distribution is degenerate")]
    DegenerateDistribution,
}

impl Error {
    /// Process exit code used by the command-line tool for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema(_) | Error::Range(_) | Error::InvalidConfig(_) => 2,
            _ => 1,
        }
    }
}
