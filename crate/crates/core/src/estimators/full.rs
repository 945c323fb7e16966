//! Final analysis: the simple and optimized estimators end to end.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::link::{expit, Link};
use crate::models::{fit_logistic_irls, DesignMatrix, InteractionLayout, LogisticFit, LogisticOptions};
use crate::types::{Arm, AssignmentMechanism, Diagnostics, EstimatorKind, PatientRecord, TrialData};

use super::components::{optimal_weights, StageColumns};
use super::OutcomeRegression;

/// Logistic outcome regression on `[1, A, W, A W]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedOutcomeModel {
    pub fit: LogisticFit,
    pub layout: InteractionLayout,
}

impl FittedOutcomeModel {
    /// Fits the model to `records` pooled over every stage.
    pub fn fit<'a, I>(records: I, dim: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a PatientRecord>,
    {
        let layout = InteractionLayout::new(dim);
        let mut design = DesignMatrix::new(layout.width());
        let mut y = Vec::new();
        let mut row = Vec::with_capacity(layout.width());
        for r in records {
            layout.row_into(r.arm, &r.w, &mut row)?;
            design.push_row(&row)?;
            y.push(r.y);
        }
        let fit = fit_logistic_irls(&design, &y, &LogisticOptions::default())?;
        Ok(Self { fit, layout })
    }
}

impl OutcomeRegression for FittedOutcomeModel {
    fn mean(&self, arm: Arm, w: &[f64]) -> f64 {
        let b = &self.fit.coefficients;
        let d = self.layout.covariates;
        let a = arm.indicator();
        let mut eta = b[0] + a * b[1];
        for (j, wj) in w.iter().enumerate().take(d) {
            eta += (b[2 + j] + a * b[2 + d + j]) * wj;
        }
        expit(eta)
    }
}

/// Source of the outcome regression used by the optimized estimator.
#[derive(Clone, Copy)]
pub enum Nuisance<'a> {
    /// Fit a logistic model with interactions on all trial data.
    PooledLogistic,
    Provided(&'a dyn OutcomeRegression),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageSummary {
    /// 1-based.
    pub stage: usize,
    pub n: usize,
    pub mechanism: AssignmentMechanism,
    pub mu1: f64,
    pub mu0: f64,
    /// Stage variance: the efficient influence term for the optimized
    /// estimator, the unaugmented one for the simple estimator.
    pub sigma2: f64,
    /// This stage's summand in the final variance, before the `n_1 / n_s` factor.
    pub variance_component: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub delta_hat: f64,
    pub se: f64,
    pub ci: (f64, f64),
    pub level: f64,
    pub weights: Vec<f64>,
    pub stage_summaries: Vec<StageSummary>,
    pub kind: EstimatorKind,
    /// Sample-size weighted arm means, guarded for the link.
    pub mu_hat: (f64, f64),
    /// All stage variances were at the floor and equal weights were used.
    pub degenerate_weights: bool,
    pub diagnostics: Diagnostics,
}

impl EstimateResult {
    pub fn covers(&self, delta: f64) -> bool {
        self.ci.0 <= delta && delta <= self.ci.1
    }
}

/// Two-sided normal quantile `z_{1 - (1 - level)/2}`.
pub(crate) fn normal_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence level must lie in (0, 1), got {level}")));
    }
    let std = Normal::standard();
    Ok(std.inverse_cdf(0.5 + level / 2.0))
}

/// Runs the simple or optimized estimator on a completed trial.
pub fn estimate_full(
    trial: &TrialData,
    link: Link,
    kind: EstimatorKind,
    nuisance: Nuisance<'_>,
    level: f64,
) -> Result<EstimateResult> {
    let z = normal_quantile(level)?;
    let mut diagnostics = Diagnostics::default();
    let fitted;
    let model: Option<&dyn OutcomeRegression> = match (kind, nuisance) {
        (EstimatorKind::Simple, _) => None,
        (EstimatorKind::Optimized, Nuisance::Provided(m)) => Some(m),
        (EstimatorKind::Optimized, Nuisance::PooledLogistic) => {
            let dim = trial.records().first().map_or(0, |r| r.w.len());
            fitted = FittedOutcomeModel::fit(trial.records(), dim)?;
            if !fitted.fit.converged {
                diagnostics.nonconverged_fits += 1;
            }
            diagnostics.dropped_columns += fitted.fit.dropped.len() as u64;
            Some(&fitted)
        }
    };

    let cols: Vec<StageColumns> = trial.stages().map(|v| StageColumns::new(v.records, v.mechanism, model)).collect();
    let mut mu1_s = Vec::with_capacity(cols.len());
    let mut mu0_s = Vec::with_capacity(cols.len());
    for c in &cols {
        mu1_s.push(c.arm_mean(Arm::Treatment)?);
        mu0_s.push(c.arm_mean(Arm::Control)?);
    }
    let sizes = trial.stage_sizes();
    let total: usize = sizes.iter().sum();
    let n_weights: Vec<f64> = sizes.iter().map(|&n| n as f64 / total as f64).collect();
    let combine = |w: &[f64], mus: &[f64]| w.iter().zip(mus).map(|(a, b)| a * b).sum::<f64>();
    let mu1 = link.guard(combine(&n_weights, &mu1_s));
    let mu0 = link.guard(combine(&n_weights, &mu0_s));
    let g1 = link.deriv(mu1)?;
    let g0 = link.deriv(mu0)?;

    let (weights, degenerate, sigma2, aug) = match model {
        None => {
            let sigma2 = cols
                .iter()
                .map(|c| c.variance_component(1.0, g1, g0, mu1, mu0, None))
                .collect::<Result<Vec<_>>>()?;
            (n_weights, false, sigma2, None)
        }
        Some(_) => {
            let sigma2 =
                cols.iter().map(|c| c.influence_variance(g1, g0, mu1, mu0)).collect::<Result<Vec<_>>>()?;
            let ow = optimal_weights(sizes, &sigma2)?;
            let aug: Vec<Vec<f64>> =
                cols.iter().zip(&ow.weights).map(|(c, &eta)| c.augmentation_values(eta, g1, g0, mu1, mu0)).collect();
            (ow.weights, ow.degenerate, sigma2, Some(aug))
        }
    };

    let mut delta_hat =
        link.value(link.guard(combine(&weights, &mu1_s)))? - link.value(link.guard(combine(&weights, &mu0_s)))?;
    if let Some(aug) = &aug {
        for (c, a) in cols.iter().zip(aug) {
            delta_hat -= c.augmentation_mean(a);
        }
    }

    let n1 = sizes[0] as f64;
    let mut var = 0.0;
    let mut stage_summaries = Vec::with_capacity(cols.len());
    for (s, (c, view)) in cols.iter().zip(trial.stages()).enumerate() {
        let component = match &aug {
            None => weights[s] * weights[s] * sigma2[s],
            Some(aug) => c.variance_component(weights[s], g1, g0, mu1, mu0, Some(&aug[s]))?,
        };
        var += n1 / sizes[s] as f64 * component;
        stage_summaries.push(StageSummary {
            stage: s + 1,
            n: sizes[s],
            mechanism: view.mechanism.clone(),
            mu1: mu1_s[s],
            mu0: mu0_s[s],
            sigma2: sigma2[s],
            variance_component: component,
        });
    }
    let se = (var / n1).sqrt();
    Ok(EstimateResult {
        delta_hat,
        se,
        ci: (delta_hat - z * se, delta_hat + z * se),
        level,
        weights,
        stage_summaries,
        kind,
        mu_hat: (mu1, mu0),
        degenerate_weights: degenerate,
        diagnostics,
    })
}
