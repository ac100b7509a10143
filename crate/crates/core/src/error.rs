use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("distribution has no bins")]
    EmptyDistribution,
    #[error("weight {index} is negative ({value})")]
    NegativeWeight { index: usize, value: f64 },
    #[error("weight {index} is not finite")]
    NonFinite { index: usize },
    #[error("weights sum to zero")]
    ZeroMass,
    #[error("weights sum to {sum}, which is more than 1e-9 away from 1")]
    NotNormalized { sum: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("bin index {index} out of range for {bins} bins")]
    Index { index: usize, bins: usize },
    #[error("subset of bins is empty")]
    EmptySubset,
    #[error("instance too large for the exact oracle: {0}")]
    TooLarge(String),
    #[error("numeric failure: {0}")]
    NumericFailure(String),
    #[error("quadrature did not converge: {0}")]
    ConvergenceFailure(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
