use std::path::PathBuf;

use thiserror::Error;

use crate::statdim::StatDimEstimate;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// AAᵀ could not be factored; the instance has no well-defined affine projector.
    #[error("ill-posed instance: {0}")]
    IllPosed(String),

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("minimization did not converge within {iterations} iterations")]
    NotConverged {
        iterations: usize,
        last: Box<StatDimEstimate>,
    },

    #[error("per-sample inner minimization did not converge (sample {sample})")]
    InnerNotConverged { sample: usize },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("corrupt checkpoint {path}: {msg}")]
    CorruptCheckpoint { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
