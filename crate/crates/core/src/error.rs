use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid task partition: {0}")]
    Partition(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("constraint set is infeasible (violation {violation:.3e})")]
    Infeasible { violation: f64 },

    #[error(
        "solver did not converge after {iterations} iterations \
         (stationarity {stationarity:.3e}, feasibility {feasibility:.3e}, complementarity {complementarity:.3e})"
    )]
    NonConvergence {
        iterations: usize,
        stationarity: f64,
        feasibility: f64,
        complementarity: f64,
    },

    #[error("active-set oracle budget exceeded: {constraints} constraints (limit {limit})")]
    BudgetExceeded { constraints: usize, limit: usize },

    #[error("dataset is not linearly separable")]
    NotSeparable,

    #[error("dataset is linearly separable; a strictly non-separable instance is required")]
    Separable,

    #[error("data matrix is rank deficient (rank {rank} < {dim})")]
    RankDeficient { rank: usize, dim: usize },

    #[error("support vectors are degenerate: {0}")]
    Degenerate(String),

    #[error("step size {eta:.6e} violates the {bound} guard {guard:.6e}")]
    GuardViolated {
        bound: &'static str,
        eta: f64,
        guard: f64,
    },

    #[error("missing snapshot: {0}")]
    MissingSnapshot(String),

    #[error("{0}")]
    Generator(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
