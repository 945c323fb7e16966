//! Building blocks of the estimator family, each usable on its own.
//!
//! The public functions take records and plain functions of `w`; internally
//! they evaluate everything once into per-stage columns and share the
//! column kernels with [`super::estimate_full`].

use crate::error::{Error, Result};
use crate::link::Link;
use crate::linalg::sample_variance;
use crate::types::{Arm, AssignmentMechanism, PatientRecord, TrialData};

use super::{CovariateFn, OutcomeRegression};

/// Floor on stage variances before they are inverted into weights.
pub const SIGMA2_FLOOR: f64 = 1e-12;

/// Per-record quantities of one stage.
#[derive(Debug, Clone, Default)]
pub(crate) struct StageColumns {
    pub stage: usize,
    pub a: Vec<f64>,
    pub y: Vec<f64>,
    pub p: Vec<f64>,
    pub m1: Vec<f64>,
    pub m0: Vec<f64>,
    /// Set when the mechanism is covariate-independent.
    pub constant_p: Option<f64>,
}

impl StageColumns {
    pub fn new(records: &[PatientRecord], mech: &AssignmentMechanism, model: Option<&dyn OutcomeRegression>) -> Self {
        let n = records.len();
        let mut cols = StageColumns {
            stage: records.first().map_or(0, |r| r.stage),
            a: Vec::with_capacity(n),
            y: Vec::with_capacity(n),
            p: Vec::with_capacity(n),
            constant_p: match mech {
                AssignmentMechanism::Fixed { pi } => Some(*pi),
                _ => None,
            },
            ..Default::default()
        };
        for r in records {
            cols.a.push(r.arm.indicator());
            cols.y.push(r.y);
            cols.p.push(match cols.constant_p {
                Some(pi) => pi,
                None => mech.propensity(&r.w),
            });
        }
        if let Some(m) = model {
            cols.m1 = records.iter().map(|r| m.mean(Arm::Treatment, &r.w)).collect();
            cols.m0 = records.iter().map(|r| m.mean(Arm::Control, &r.w)).collect();
        }
        cols
    }

    pub fn len(&self) -> usize {
        self.a.len()
    }

    /// Hajek mean of `Y` in `arm`; the plain group average under constant `p`.
    pub fn arm_mean(&self, arm: Arm) -> Result<f64> {
        let target = arm.indicator();
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..self.len() {
            if self.a[i] != target {
                continue;
            }
            let wt = if self.constant_p.is_some() { 1.0 } else { 1.0 / arm.probability(self.p[i]) };
            num += wt * self.y[i];
            den += wt;
        }
        if den > 0.0 {
            Ok(num / den)
        } else {
            Err(Error::EmptyArm { stage: self.stage, arm: arm.value() })
        }
    }

    /// Values of the estimated optimal augmentation function at each record.
    pub fn augmentation_values(&self, weight: f64, g1: f64, g0: f64, mu1: f64, mu0: f64) -> Vec<f64> {
        (0..self.len())
            .map(|i| weight * (g1 * (self.m1[i] - mu1) / self.p[i] + g0 * (self.m0[i] - mu0) / (1.0 - self.p[i])))
            .collect()
    }

    /// `mean[(A - p) c]`.
    pub fn augmentation_mean(&self, c: &[f64]) -> f64 {
        if self.len() == 0 {
            return 0.0;
        }
        (0..self.len()).map(|i| (self.a[i] - self.p[i]) * c[i]).sum::<f64>() / self.len() as f64
    }

    /// Sample variance of the plug-in efficient influence term.
    pub fn influence_variance(&self, g1: f64, g0: f64, mu1: f64, mu0: f64) -> Result<f64> {
        let terms: Vec<f64> = (0..self.len())
            .map(|i| {
                let (a, y, p, m1, m0) = (self.a[i], self.y[i], self.p[i], self.m1[i], self.m0[i]);
                g1 * a * (y - m1) / p - g0 * (1.0 - a) * (y - m0) / (1.0 - p) + g1 * (m1 - mu1) - g0 * (m0 - mu0)
            })
            .collect();
        sample_variance(&terms)
            .ok_or_else(|| Error::Estimation(format!("stage {} needs at least two records", self.stage)))
    }

    /// Sample variance of this stage's weighted, augmented influence term.
    pub fn variance_component(&self, weight: f64, g1: f64, g0: f64, mu1: f64, mu0: f64, c: Option<&[f64]>) -> Result<f64> {
        let terms: Vec<f64> = (0..self.len())
            .map(|i| {
                let (a, y, p) = (self.a[i], self.y[i], self.p[i]);
                let aug = c.map_or(0.0, |c| (a - p) * c[i]);
                weight * g1 * a * (y - mu1) / p - weight * g0 * (1.0 - a) * (y - mu0) / (1.0 - p) - aug
            })
            .collect();
        sample_variance(&terms)
            .ok_or_else(|| Error::Estimation(format!("stage {} needs at least two records", self.stage)))
    }
}

fn stage_error(records: &[PatientRecord], arm: Arm) -> Error {
    Error::EmptyArm { stage: records.first().map_or(0, |r| r.stage), arm: arm.value() }
}

/// Treatment-group average `mean{I(A = a) Y} / mean{I(A = a)}`.
pub fn stage_mean(records: &[PatientRecord], arm: Arm) -> Result<f64> {
    let (sum, n) = records.iter().filter(|r| r.arm == arm).fold((0.0, 0usize), |(s, n), r| (s + r.y, n + 1));
    if n == 0 {
        return Err(stage_error(records, arm));
    }
    Ok(sum / n as f64)
}

/// Hajek inverse-probability-weighted mean of `Y` in `arm`, weighting each
/// record by `1 / P(A = arm | W)` under `mech`.
pub fn stage_mean_ipw(records: &[PatientRecord], mech: &AssignmentMechanism, arm: Arm) -> Result<f64> {
    if mech.is_cir() {
        return stage_mean(records, arm);
    }
    StageColumns::new(records, mech, None).arm_mean(arm)
}

/// `g(sum eta_s mu1_s) - g(sum eta_s mu0_s)`.
pub fn weighted_delta(link: Link, weights: &[f64], stage_mu1: &[f64], stage_mu0: &[f64]) -> Result<f64> {
    if stage_mu1.len() != weights.len() || stage_mu0.len() != weights.len() {
        return Err(Error::DimensionMismatch { expected: weights.len(), found: stage_mu1.len().max(stage_mu0.len()) });
    }
    check_simplex(weights)?;
    let combine = |mus: &[f64]| mus.iter().zip(weights).map(|(m, w)| m * w).sum::<f64>();
    Ok(link.value(combine(stage_mu1))? - link.value(combine(stage_mu0))?)
}

fn check_simplex(weights: &[f64]) -> Result<()> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() || weights.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("stage weights must be nonnegative and sum to 1, got {weights:?}")));
    }
    Ok(())
}

/// `mean_s{(A - pi_s) b(W)}` for a covariate-independent stage.
pub fn augmentation_column_cir(records: &[PatientRecord], pi: f64, b: &dyn Fn(&[f64]) -> f64) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().map(|r| (r.arm.indicator() - pi) * b(&r.w)).sum::<f64>() / records.len() as f64
}

/// `mean_s{(A - p_s(W)) c(W)}` under any mechanism.
pub fn augmentation_column(records: &[PatientRecord], mech: &AssignmentMechanism, c: &dyn Fn(&[f64]) -> f64) -> f64 {
    if let AssignmentMechanism::Fixed { pi } = mech {
        return augmentation_column_cir(records, *pi, c);
    }
    if records.is_empty() {
        return 0.0;
    }
    records.iter().map(|r| (r.arm.indicator() - mech.propensity(&r.w)) * c(&r.w)).sum::<f64>() / records.len() as f64
}

fn fixed_pi(mech: &AssignmentMechanism, stage: usize) -> Result<f64> {
    match mech {
        AssignmentMechanism::Fixed { pi } => Ok(*pi),
        _ => Err(Error::InvalidArgument(format!(
            "stage {stage} is covariate-dependent; use the inverse-probability-weighted estimator"
        ))),
    }
}

/// Augmented estimator for a two-stage covariate-independent trial:
/// `delta(theta) - mean_1{(A - pi1) b1} - mean_2{(A - pi2) b2}`.
pub fn augmented_delta(
    trial: &TrialData,
    link: Link,
    theta: f64,
    b1: &dyn Fn(&[f64]) -> f64,
    b2: &dyn Fn(&[f64]) -> f64,
) -> Result<f64> {
    if trial.k() != 2 {
        return Err(Error::InvalidArgument(format!("expected a two-stage trial, got {} stages", trial.k())));
    }
    let (s1, s2) = (trial.stage(0), trial.stage(1));
    let (pi1, pi2) = (fixed_pi(s1.mechanism, 1)?, fixed_pi(s2.mechanism, 2)?);
    let mu1 = [stage_mean(s1.records, Arm::Treatment)?, stage_mean(s2.records, Arm::Treatment)?];
    let mu0 = [stage_mean(s1.records, Arm::Control)?, stage_mean(s2.records, Arm::Control)?];
    let base = weighted_delta(link, &[theta, 1.0 - theta], &mu1, &mu0)?;
    Ok(base - augmentation_column_cir(s1.records, pi1, b1) - augmentation_column_cir(s2.records, pi2, b2))
}

/// Augmented IPW estimator for a `k`-stage trial with augmentation functions
/// `c[s]` and stage weights `weights`.
pub fn aipw_delta(trial: &TrialData, link: Link, weights: &[f64], c: &[CovariateFn<'_>]) -> Result<f64> {
    if weights.len() != trial.k() || c.len() != trial.k() {
        return Err(Error::DimensionMismatch { expected: trial.k(), found: weights.len().min(c.len()) });
    }
    let mut mu1 = Vec::with_capacity(trial.k());
    let mut mu0 = Vec::with_capacity(trial.k());
    for view in trial.stages() {
        mu1.push(stage_mean_ipw(view.records, view.mechanism, Arm::Treatment)?);
        mu0.push(stage_mean_ipw(view.records, view.mechanism, Arm::Control)?);
    }
    let mut delta = weighted_delta(link, weights, &mu1, &mu0)?;
    for (view, cs) in trial.stages().zip(c) {
        delta -= augmentation_column(view.records, view.mechanism, cs);
    }
    Ok(delta)
}

/// Where an augmentation function reads the stage propensity from.
#[derive(Clone, Copy)]
enum PropensitySource<'a> {
    Constant(f64),
    Mechanism(&'a AssignmentMechanism),
}

/// Estimated optimal augmentation function of one stage,
/// `w -> weight * [g'(mu1)(m1(w) - mu1)/p(w) + g'(mu0)(m0(w) - mu0)/(1 - p(w))]`.
#[derive(Clone, Copy)]
pub struct Augmentation<'a> {
    weight: f64,
    g1: f64,
    g0: f64,
    mu1: f64,
    mu0: f64,
    model: &'a dyn OutcomeRegression,
    propensity: PropensitySource<'a>,
}

impl Augmentation<'_> {
    pub fn eval(&self, w: &[f64]) -> f64 {
        let p = match self.propensity {
            PropensitySource::Constant(p) => p,
            PropensitySource::Mechanism(m) => m.propensity(w),
        };
        let m1 = self.model.mean(Arm::Treatment, w);
        let m0 = self.model.mean(Arm::Control, w);
        self.weight * (self.g1 * (m1 - self.mu1) / p + self.g0 * (m0 - self.mu0) / (1.0 - p))
    }
}

fn derivs(link: Link, mu1: f64, mu0: f64) -> Result<(f64, f64)> {
    Ok((link.deriv(link.guard(mu1))?, link.deriv(link.guard(mu0))?))
}

/// Estimated optimal `(b1, b2)` for a two-stage covariate-independent trial
/// with stage-1 weight `theta`.
#[allow(clippy::too_many_arguments)]
pub fn optimal_augmentation_cir<'a>(
    link: Link,
    mu1: f64,
    mu0: f64,
    model: &'a dyn OutcomeRegression,
    pi1: f64,
    pi2: f64,
    theta: f64,
) -> Result<(Augmentation<'a>, Augmentation<'a>)> {
    for pi in [pi1, pi2] {
        if !(pi > 0.0 && pi < 1.0) {
            return Err(Error::InvalidArgument(format!("assignment probability must lie in (0, 1), got {pi}")));
        }
    }
    let (g1, g0) = derivs(link, mu1, mu0)?;
    let base = Augmentation { weight: theta, g1, g0, mu1, mu0, model, propensity: PropensitySource::Constant(pi1) };
    Ok((base, Augmentation { weight: 1.0 - theta, propensity: PropensitySource::Constant(pi2), ..base }))
}

/// Estimated optimal `c_s` for every stage of a `k`-stage trial.
pub fn optimal_augmentation_cdr<'a>(
    link: Link,
    mu1: f64,
    mu0: f64,
    model: &'a dyn OutcomeRegression,
    mechanisms: &'a [AssignmentMechanism],
    weights: &[f64],
) -> Result<Vec<Augmentation<'a>>> {
    if mechanisms.len() != weights.len() {
        return Err(Error::DimensionMismatch { expected: weights.len(), found: mechanisms.len() });
    }
    let (g1, g0) = derivs(link, mu1, mu0)?;
    Ok(mechanisms
        .iter()
        .zip(weights)
        .map(|(mech, &weight)| Augmentation {
            weight,
            g1,
            g0,
            mu1,
            mu0,
            model,
            propensity: match mech {
                AssignmentMechanism::Fixed { pi } => PropensitySource::Constant(*pi),
                other => PropensitySource::Mechanism(other),
            },
        })
        .collect())
}

/// Stage variance estimate `sigma_s^2`: sample variance over the stage of
/// `g'(mu1) A (Y - m1)/p - g'(mu0)(1 - A)(Y - m0)/(1 - p) + g'(mu1)(m1 - mu1) - g'(mu0)(m0 - mu0)`.
pub fn stage_variance(
    records: &[PatientRecord],
    mech: &AssignmentMechanism,
    link: Link,
    mu1: f64,
    mu0: f64,
    model: &dyn OutcomeRegression,
) -> Result<f64> {
    let (g1, g0) = derivs(link, mu1, mu0)?;
    StageColumns::new(records, mech, Some(model)).influence_variance(g1, g0, mu1, mu0)
}

/// Inverse-variance stage weights `eta_s ∝ n_s / sigma_s^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalWeights {
    pub weights: Vec<f64>,
    /// Every variance sat at the floor; equal weights were returned.
    pub degenerate: bool,
}

pub fn optimal_weights(n: &[usize], sigma2: &[f64]) -> Result<OptimalWeights> {
    if n.len() != sigma2.len() || n.is_empty() {
        return Err(Error::DimensionMismatch { expected: n.len(), found: sigma2.len() });
    }
    if n.contains(&0) {
        return Err(Error::InvalidArgument("stage sizes must be positive".into()));
    }
    if sigma2.iter().any(|s| !(*s >= 0.0)) {
        return Err(Error::InvalidArgument(format!("stage variances must be nonnegative, got {sigma2:?}")));
    }
    if sigma2.iter().all(|s| *s <= SIGMA2_FLOOR) {
        let k = n.len() as f64;
        return Ok(OptimalWeights { weights: vec![1.0 / k; n.len()], degenerate: true });
    }
    let raw: Vec<f64> = n.iter().zip(sigma2).map(|(&ns, &s)| ns as f64 / s.max(SIGMA2_FLOOR)).collect();
    let total: f64 = raw.iter().sum();
    let mut weights: Vec<f64> = raw.iter().map(|r| r / total).collect();
    // The last weight takes the remainder, so two stages are exactly (theta, 1 - theta).
    let head: f64 = weights[..weights.len() - 1].iter().sum();
    *weights.last_mut().expect("nonempty") = (1.0 - head).max(0.0);
    Ok(OptimalWeights { weights, degenerate: false })
}

/// Plug-in variance of the (augmented) estimator:
/// `V = sum_s (n_1/n_s) var_s[eta_s g'(mu1) A (Y - mu1)/p - eta_s g'(mu0)(1 - A)(Y - mu0)/(1 - p) - (A - p) c_s]`.
/// Returns `(V, sqrt(V / n_1))`.
pub fn final_variance(
    trial: &TrialData,
    link: Link,
    mu1: f64,
    mu0: f64,
    weights: &[f64],
    c: &[CovariateFn<'_>],
) -> Result<(f64, f64)> {
    if weights.len() != trial.k() || c.len() != trial.k() {
        return Err(Error::DimensionMismatch { expected: trial.k(), found: weights.len().min(c.len()) });
    }
    let (g1, g0) = derivs(link, mu1, mu0)?;
    let n1 = trial.stage_sizes()[0] as f64;
    let mut total = 0.0;
    for ((view, &eta), cs) in trial.stages().zip(weights).zip(c) {
        let cols = StageColumns::new(view.records, view.mechanism, None);
        let cvals: Vec<f64> = view.records.iter().map(|r| cs(&r.w)).collect();
        let v = cols.variance_component(eta, g1, g0, mu1, mu0, Some(&cvals))?;
        total += n1 / view.records.len() as f64 * v;
    }
    Ok((total, (total / n1).sqrt()))
}
