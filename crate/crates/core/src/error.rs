use thiserror::Error;

/// Errors surfaced by the discretization, solvers and I/O layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("index {index} out of range (len {len})")]
    OutOfRange { index: usize, len: usize },

    #[error("point ({0}, {1}) lies outside the mesh")]
    PointNotFound(f64, f64),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("singular matrix: no acceptable pivot at elimination step {step} (row {row})")]
    SingularMatrix { step: usize, row: usize },

    #[error("dense system is numerically singular: {0}")]
    DenseSingular(String),

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("Newton iteration did not converge after {iterations} steps (last relative residual {residual:.3e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("reduced solve failed for option {option}: {source}")]
    ReducedSolve {
        option: String,
        #[source]
        source: Box<Error>,
    },

    #[error("high-fidelity solve failed at mu = ({mu1}, {mu2}): {source}")]
    SnapshotFailed {
        mu1: f64,
        mu2: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("greedy selected parameter ({0}, {1}) twice")]
    DuplicateSelection(f64, f64),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
