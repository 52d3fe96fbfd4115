use thiserror::Error;

use crate::geometry::BoundViolation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("learning rate {eta} outside (0, {max}]")]
    LearningRateOutOfRange { eta: f64, max: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("covariance is not positive definite")]
    NotPositiveDefinite,

    #[error("gradient bound violated: {0}")]
    GradientBound(BoundViolation),

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("slope fit inapplicable: {0}")]
    InapplicableFit(String),

    #[error("scripted environment exhausted after {0} rounds")]
    ScriptExhausted(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

pub(crate) fn check_finite(v: &[f64], what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
