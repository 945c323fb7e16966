//! Treatment-effect estimators for multi-stage adaptive trials.
//!
//! Every estimator here is a member of one family: stage-specific (Hajek
//! inverse-probability-weighted) arm means combined with convex stage weights,
//! mapped through the link, minus one augmentation term per stage,
//!
//! ```text
//! delta(c, eta) = g(sum_s eta_s mu1^(s)) - g(sum_s eta_s mu0^(s))
//!               - sum_s mean_s[(A - p_s(W)) c_s(W)].
//! ```
//!
//! Covariate-independent stages are the special case `p_s(W) = pi_s`, where
//! the Hajek mean is the plain treatment-group average. The optimized
//! estimator plugs in estimated optimal augmentation functions and inverse
//! variance stage weights; the simple one uses sample-size weights and no
//! augmentation.

mod components;
mod full;

pub use components::{
    aipw_delta, augmentation_column, augmentation_column_cir, augmented_delta, final_variance,
    optimal_augmentation_cdr, optimal_augmentation_cir, optimal_weights, stage_mean, stage_mean_ipw,
    stage_variance, weighted_delta, Augmentation, OptimalWeights, SIGMA2_FLOOR,
};
pub use full::{estimate_full, EstimateResult, FittedOutcomeModel, Nuisance, StageSummary};

use crate::types::Arm;

/// A function of the covariate vector, such as an augmentation term.
pub type CovariateFn<'a> = &'a dyn Fn(&[f64]) -> f64;

/// Estimated conditional mean `m_a(w)` of the outcome.
pub trait OutcomeRegression: Sync {
    fn mean(&self, arm: Arm, w: &[f64]) -> f64;
}

impl<F> OutcomeRegression for F
where
    F: Fn(Arm, &[f64]) -> f64 + Sync,
{
    fn mean(&self, arm: Arm, w: &[f64]) -> f64 {
        self(arm, w)
    }
}
