//! Nuisance estimation: logistic regression, empirical cell moments, and the
//! interim analysis that turns them into the next stage's mechanism.

mod interim;
mod irls;
mod moments;

pub use interim::{estimate_interim_allocation, pooled_arm_means, InterimAllocation};
pub use irls::{
    build_design_row, fit_logistic_irls, fit_logistic_irls_from, predict_mean_binary, DesignMatrix,
    InteractionLayout, LogisticFit, LogisticOptions,
};
pub use moments::{empirical_conditional_moments, CellMoment, ConditionalMoments};

pub use crate::types::conditional_variance_binary;
