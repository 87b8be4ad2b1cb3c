use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Indices carried by path errors are 1-based, matching the path representation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("alignment path is empty")]
    EmptyPath,

    #[error("bad endpoint at step {index}: {detail}")]
    BadEndpoint { index: usize, detail: String },

    #[error("bad move at step {index}: {from:?} -> {to:?}")]
    BadMove {
        index: usize,
        from: (usize, usize),
        to: (usize, usize),
    },

    #[error("step {index} = {cell:?} lies outside the {rows}x{cols} grid")]
    OutOfGrid {
        index: usize,
        cell: (usize, usize),
        rows: usize,
        cols: usize,
    },

    #[error("matrix contains a non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("no feasible alignment inside band of width {band}")]
    NoFeasiblePath { band: usize },

    #[error("enumeration of {count} paths exceeds the limit of {limit}")]
    TooLarge { count: String, limit: u64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("eigendecomposition did not converge")]
    EigenFailure,

    #[error("power iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("pair {id:?} has no ground-truth alignment")]
    MissingTruth { id: String },

    #[error("invalid configuration: {0}")]
    BadSpec(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("inconsistent dimensions in {path}: {message}")]
    InconsistentDims { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }

    /// True for failures of the numerical routines rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::EigenFailure | Error::NoConvergence { .. } | Error::NonFinite { .. }
        )
    }
}
