use crate::optimizer::Iterate;

/// Errors raised across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A modeling assumption required by a formula does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A payoff expression left its domain (non-positive log argument).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("alternating maximization did not converge after {iterations} iterations")]
    Convergence {
        iterations: usize,
        trace: Vec<Iterate>,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
