//! Interim re-estimation of the optimal assignment mechanism.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::link::Link;
use crate::randomization::{optimal_pi, optimal_propensity, AllocationInputs};
use crate::types::{
    conditional_variance_binary, AdaptationRule, Arm, AssignmentMechanism, DesignClass, Diagnostics, StageView,
    VarianceModel, WorkingPropensity, VARIANCE_FLOOR,
};

use super::irls::{fit_logistic_irls, DesignMatrix, InteractionLayout, LogisticOptions};
use super::moments::empirical_conditional_moments;

/// Result of one interim analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct InterimAllocation {
    pub mechanism: AssignmentMechanism,
    /// The previous mechanism was kept because the data could not support
    /// re-estimation.
    pub fallback: bool,
    /// Plug-in arm means used in the allocation formula.
    pub mu_hat: Option<(f64, f64)>,
    pub diagnostics: Diagnostics,
}

impl InterimAllocation {
    fn keep(previous: &AssignmentMechanism, mut diagnostics: Diagnostics) -> Self {
        diagnostics.interim_fallbacks += 1;
        Self { mechanism: previous.clone(), fallback: true, mu_hat: None, diagnostics }
    }
}

/// Arm means pooled over all history blocks: plain treatment-group averages
/// when every block used covariate-independent randomization, Hajek
/// inverse-probability-weighted averages otherwise. `None` if an arm is empty.
pub fn pooled_arm_means(history: &[StageView<'_>]) -> Option<(f64, f64)> {
    let all_cir = history.iter().all(|v| v.mechanism.is_cir());
    let mut num = [0.0; 2];
    let mut den = [0.0; 2];
    for view in history {
        for r in view.records {
            let a = r.arm.value() as usize;
            let wt = if all_cir { 1.0 } else { 1.0 / r.arm.probability(view.mechanism.propensity(&r.w)) };
            num[a] += wt * r.y;
            den[a] += wt;
        }
    }
    (den[0] > 0.0 && den[1] > 0.0).then(|| (num[1] / den[1], num[0] / den[0]))
}

/// Re-optimizes the assignment mechanism for the next stage from all data
/// accumulated so far (`history`, which may include preliminary data).
/// Falls back to `previous` when the variance functions cannot be estimated.
pub fn estimate_interim_allocation(
    history: &[StageView<'_>],
    rule: &AdaptationRule,
    link: Link,
    previous: &AssignmentMechanism,
) -> Result<InterimAllocation> {
    rule.validate()?;
    let mut diag = Diagnostics::default();
    let Some((mu1_raw, mu0_raw)) = pooled_arm_means(history) else {
        return Ok(InterimAllocation::keep(previous, diag));
    };
    let (mu1, mu0) = (link.guard(mu1_raw), link.guard(mu0_raw));
    let selector = &rule.selector;
    let records = || history.iter().flat_map(|v| v.records.iter());

    let mechanism = match rule.variance_model {
        VarianceModel::Logistic => {
            let layout = InteractionLayout::new(selector.dim());
            let n = records().count();
            let mut design = DesignMatrix::with_capacity(layout.width(), n);
            let mut y = Vec::with_capacity(n);
            let (mut x, mut row) = (Vec::new(), Vec::new());
            for r in records() {
                selector.apply_into(&r.w, &mut x);
                layout.row_into(r.arm, &x, &mut row)?;
                design.push_row(&row)?;
                y.push(r.y);
            }
            let fit = fit_logistic_irls(&design, &y, &LogisticOptions::default())?;
            if !fit.converged {
                diag.nonconverged_fits += 1;
            }
            diag.dropped_columns += fit.dropped.len() as u64;
            let working = WorkingPropensity::new(selector.clone(), fit.coefficients, mu1, mu0, link, rule.clamp)?;
            match rule.design_class {
                DesignClass::Cir => {
                    let (mut ev1, mut ev0) = (0.0, 0.0);
                    for r in records() {
                        selector.apply_into(&r.w, &mut x);
                        ev1 += conditional_variance_binary(working.mean(Arm::Treatment, &x));
                        ev0 += conditional_variance_binary(working.mean(Arm::Control, &x));
                    }
                    let inputs = AllocationInputs { link, mu1, mu0, ev1: ev1 / n as f64, ev0: ev0 / n as f64 };
                    AssignmentMechanism::Fixed { pi: optimal_pi(&inputs, rule.clamp)? }
                }
                DesignClass::Cdr => AssignmentMechanism::Working(working),
            }
        }
        VarianceModel::Empirical => {
            let treated = empirical_conditional_moments(records(), Arm::Treatment, selector);
            let control = empirical_conditional_moments(records(), Arm::Control, selector);
            let mut complete: BTreeMap<u32, (f64, f64)> = BTreeMap::new();
            for (cell, m1) in &treated.cells {
                if let (Some(v1), Some(v0)) = (m1.variance, control.get(*cell).and_then(|m| m.variance)) {
                    complete.insert(*cell, (v1.max(VARIANCE_FLOOR), v0.max(VARIANCE_FLOOR)));
                }
            }
            if complete.is_empty() {
                return Ok(InterimAllocation::keep(previous, diag));
            }
            match rule.design_class {
                DesignClass::Cir => {
                    let (mut ev1, mut ev0, mut n) = (0.0, 0.0, 0usize);
                    for r in records() {
                        if let Some((v1, v0)) = complete.get(&selector.cell(&r.w)) {
                            ev1 += v1;
                            ev0 += v0;
                            n += 1;
                        }
                    }
                    let inputs = AllocationInputs { link, mu1, mu0, ev1: ev1 / n as f64, ev0: ev0 / n as f64 };
                    AssignmentMechanism::Fixed { pi: optimal_pi(&inputs, rule.clamp)? }
                }
                DesignClass::Cdr => {
                    let mut cells = BTreeMap::new();
                    for (&cell, &(v1, v0)) in &complete {
                        let x = selector.cell_values(cell);
                        let p = optimal_propensity(link, mu1, mu0, |_| v1, |_| v0, &x, rule.clamp)?;
                        cells.insert(cell, p);
                    }
                    AssignmentMechanism::Table { selector: selector.clone(), cells }
                }
            }
        }
    };
    Ok(InterimAllocation { mechanism, fallback: false, mu_hat: Some((mu1, mu0)), diagnostics: diag })
}
