use thiserror::Error;

use crate::link::Link;

/// Errors raised by the simulation and estimation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{link:?} link is undefined at mean {mu}")]
    LinkDomain { link: Link, mu: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("both conditional variance terms are zero; allocation is undefined")]
    DegenerateVariance,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("stage {stage} has no patients assigned to arm {arm}")]
    EmptyArm { stage: usize, arm: u8 },

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("covariance matrix is not positive semi-definite")]
    NotPositiveSemiDefinite,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
