//! One adaptive trial from first patient to final analysis.

use rand::Rng;

use crate::error::{Error, Result};
use crate::estimators::{estimate_full, EstimateResult, Nuisance};
use crate::link::Link;
use crate::models::estimate_interim_allocation;
use crate::randomization::assign_cdr;
use crate::types::{
    AssignmentMechanism, DesignSpec, Diagnostics, PatientRecord, PilotData, StageOne, StageView, TrialData,
};

use super::dgp::Patient;

/// Everything a trial reads besides its own assignment stream.
#[derive(Debug, Clone, Copy)]
pub struct TrialInputs<'a> {
    pub link: Link,
    pub level: f64,
    pub pilot: Option<&'a PilotData>,
    /// Patients in enrolment order; stage `s` takes the next `n_s`.
    pub pool: &'a [Patient],
}

#[derive(Debug, Clone)]
pub struct TrialRun {
    pub data: TrialData,
    /// One entry per estimator requested by the design, in order.
    pub estimates: Vec<Result<EstimateResult>>,
}

impl TrialRun {
    /// Realized stage-2 allocation: `pi_2`, or the average of `p_2(W)` over
    /// stage-2 patients. `None` for one-stage trials.
    pub fn mean_pi2(&self) -> Option<f64> {
        if self.data.k() < 2 {
            return None;
        }
        let view = self.data.stage(1);
        Some(match view.mechanism {
            AssignmentMechanism::Fixed { pi } => *pi,
            m => view.records.iter().map(|r| m.propensity(&r.w)).sum::<f64>() / view.records.len() as f64,
        })
    }
}

/// Mechanism for stage 1: the design's fixed mechanism, or one optimized on
/// the preliminary data.
fn stage_one_mechanism(design: &DesignSpec, inputs: &TrialInputs<'_>, diag: &mut Diagnostics) -> Result<AssignmentMechanism> {
    match design.stage1() {
        StageOne::Mechanism(m) => Ok(m.clone()),
        StageOne::Optimized(rule) => {
            let pilot = inputs
                .pilot
                .ok_or_else(|| Error::InvalidArgument("stage 1 is optimized but there is no preliminary data".into()))?;
            let alloc = estimate_interim_allocation(&[pilot.view()], rule, inputs.link, &pilot.mechanism)?;
            diag.merge(&alloc.diagnostics);
            Ok(alloc.mechanism)
        }
    }
}

/// Runs `design` on the pool, re-estimating the assignment mechanism at
/// each interim from preliminary data and completed stages only.
pub fn run_trial<R: Rng + ?Sized>(design: &DesignSpec, inputs: &TrialInputs<'_>, rng: &mut R) -> Result<TrialRun> {
    let total = design.total_size();
    if inputs.pool.len() < total {
        return Err(Error::InvalidArgument(format!(
            "patient pool holds {} patients, design needs {total}",
            inputs.pool.len()
        )));
    }
    let mut diag = Diagnostics::default();
    let mut records: Vec<PatientRecord> = Vec::with_capacity(total);
    let mut mechanisms: Vec<AssignmentMechanism> = Vec::with_capacity(design.k());
    let mut bounds = Vec::with_capacity(design.k());
    for (s, &n_s) in design.stage_sizes().iter().enumerate() {
        let mechanism = if s == 0 {
            stage_one_mechanism(design, inputs, &mut diag)?
        } else {
            let mut history: Vec<StageView<'_>> = Vec::with_capacity(s + 1);
            if let Some(p) = inputs.pilot {
                history.push(p.view());
            }
            for (j, &(lo, hi)) in bounds.iter().enumerate() {
                history.push(StageView { records: &records[lo..hi], mechanism: &mechanisms[j] });
            }
            let alloc = estimate_interim_allocation(&history, &design.adaptation()[s - 1], inputs.link, &mechanisms[s - 1])?;
            diag.merge(&alloc.diagnostics);
            alloc.mechanism
        };
        let start = records.len();
        for patient in &inputs.pool[start..start + n_s] {
            let (arm, resolved) = assign_cdr(&mechanism, &patient.w, rng);
            if resolved.missing_cell {
                diag.missing_cell_assignments += 1;
            }
            records.push(PatientRecord { stage: s + 1, w: patient.w.clone(), arm, y: patient.outcome(arm) });
        }
        bounds.push((start, records.len()));
        mechanisms.push(mechanism);
    }
    let mut data = TrialData::new(design.stage_sizes().to_vec(), records, mechanisms)?;
    data.pilot = inputs.pilot.cloned();
    data.diagnostics = diag;
    let estimates = design
        .estimators()
        .iter()
        .map(|&kind| estimate_full(&data, inputs.link, kind, Nuisance::PooledLogistic, inputs.level))
        .collect();
    Ok(TrialRun { data, estimates })
}
