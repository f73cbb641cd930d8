use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfiguration(String),

    #[error("point {0} lies outside the domain [0, 1]")]
    Domain(f64),

    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    /// A vector lost (numerically) all of its norm after projection.
    #[error("vector {index} is collinear with the preceding vectors")]
    Collinear { index: usize },

    #[error("malformed graph: {0}")]
    MalformedGraph(String),

    /// An edge move would have introduced a directed cycle. Expected during
    /// MCMC, so callers usually match on it rather than propagate it.
    #[error("edge move would create a directed cycle")]
    CycleViolation,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid model state: {0}")]
    InvalidState(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("infeasible parameters: {0}")]
    Infeasible(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    /// A sweep failed; carries the iteration for diagnostics.
    #[error("sweep {iteration} of chain {chain} failed: {source}")]
    Sampler {
        chain: u64,
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
