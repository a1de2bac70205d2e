use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point index {index} out of range for {n} points")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("k = {k} requires at least {} points, dataset has {n}", k + 1)]
    TooManyNeighbors { k: usize, n: usize },

    #[error("{what}: n = {n} exceeds cap {cap}; {hint}")]
    CapExceeded {
        what: &'static str,
        n: usize,
        cap: usize,
        hint: &'static str,
    },

    #[error("{}: line {line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("eigensolver did not converge after {matvecs} matrix-vector products (residual {residual:.3e})")]
    NoConvergence { matvecs: usize, residual: f64 },

    #[error("labels required but dataset `{0}` is unlabeled")]
    MissingLabels(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
