//! Simulation and analysis of multi-stage covariate-adjusted response-adaptive
//! randomized trials.
//!
//! The crate covers optimal allocation rules, interim re-estimation of the
//! assignment mechanism, the augmented (IPW) estimator family for the final
//! analysis, and a Monte Carlo engine that runs whole trials.

pub mod engine;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod link;
pub mod models;
pub mod randomization;
pub mod types;

pub use error::{Error, Result};
pub use link::Link;
pub use types::*;
