use thiserror::Error;

/// Errors surfaced by the simulation, statistics and lattice layers.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("insufficient data: need at least {needed} paths, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("empty sample")]
    Empty,

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("no convergence after {iterations} iterations (max excess demand {max_excess:.3e})")]
    NoConvergence {
        iterations: usize,
        max_excess: f64,
        excess: Vec<f64>,
    },

    #[error("lp solver: {0}")]
    Solver(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::InvalidArgument(msg.into()))
}
