//! Replicated trials and their summaries.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::Link;
use crate::linalg::sample_variance;
use crate::types::{CovariateSelector, DesignSpec, Diagnostics, EstimatorKind, PopulationSpec};

use super::dgp::{design_stream, draw_pilot, draw_pool, substream, PILOT_STREAM, POOL_STREAM};
use super::exec::Execution;
use super::trial::{run_trial, TrialInputs};
use super::truth::{true_marginals, TrueValues, TruthBudget};

/// Share of failed replications above which a summary row is invalid.
pub const MAX_FAILURE_RATE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedDesign {
    pub name: String,
    pub spec: DesignSpec,
}

/// The (design, estimator) cell against which efficiencies are reported.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reference {
    pub design: String,
    pub estimator: EstimatorKind,
}

/// Designs compared on one population. Within a replication all designs
/// enrol the same patients and share the same preliminary data; each design
/// randomizes from its own stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub setting: String,
    pub population: PopulationSpec,
    pub link: Link,
    /// Covariates the designs adapt to; also defines the true `pi_opt`.
    pub selector: CovariateSelector,
    pub preliminary_n: usize,
    pub designs: Vec<NamedDesign>,
    pub reference: Reference,
    pub replications: usize,
    pub seed: u64,
    pub level: f64,
    pub truth_budget: TruthBudget,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.replications == 0 {
            problems.push("replications must be at least 1".to_string());
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            problems.push(format!("level must lie in (0, 1), got {}", self.level));
        }
        if self.selector.full_dim() != self.population.dim() {
            problems.push("selector dimension differs from the population".to_string());
        }
        let mut names = BTreeSet::new();
        for d in &self.designs {
            if !names.insert(d.name.as_str()) {
                problems.push(format!("duplicate design name `{}`", d.name));
            }
            if d.spec.needs_preliminary() && self.preliminary_n == 0 {
                problems.push(format!("design `{}` optimizes stage 1 but preliminary_n is 0", d.name));
            }
        }
        match self.designs.iter().find(|d| d.name == self.reference.design) {
            None => problems.push(format!("reference design `{}` is not in the scenario", self.reference.design)),
            Some(d) if !d.spec.estimators().contains(&self.reference.estimator) => problems.push(format!(
                "reference design `{}` does not run the {} estimator",
                d.name, self.reference.estimator
            )),
            Some(_) => {}
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("scenario `{}`: {}", self.name, problems.join("; "))))
        }
    }

    pub fn true_values(&self) -> Result<TrueValues> {
        true_marginals(&self.population, self.link, &self.selector, &self.truth_budget)
    }

    fn pool_size(&self) -> usize {
        self.designs.iter().map(|d| d.spec.total_size()).max().unwrap_or(0)
    }
}

/// Point estimate, standard error and coverage of one estimator in one replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatePoint {
    pub delta_hat: f64,
    pub se: f64,
    pub covers: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignOutcome {
    pub estimates: Vec<std::result::Result<EstimatePoint, String>>,
    pub mean_pi2: Option<f64>,
    pub diagnostics: Diagnostics,
}

/// Per-design results of one replication, in scenario order.
pub type ReplicationOutcome = Vec<std::result::Result<DesignOutcome, String>>;

/// Runs every design of `scenario` once, on replication `rep`'s streams.
pub fn run_replication(scenario: &Scenario, true_delta: f64, rep: u64) -> ReplicationOutcome {
    let pool = draw_pool(&scenario.population, scenario.pool_size(), &mut substream(scenario.seed, rep, POOL_STREAM));
    let pilot = (scenario.preliminary_n > 0).then(|| {
        draw_pilot(&scenario.population, scenario.preliminary_n, &mut substream(scenario.seed, rep, PILOT_STREAM))
    });
    let inputs = TrialInputs { link: scenario.link, level: scenario.level, pilot: pilot.as_ref(), pool: &pool };
    scenario
        .designs
        .iter()
        .map(|d| {
            let mut rng = substream(scenario.seed, rep, design_stream(&d.name));
            let run = run_trial(&d.spec, &inputs, &mut rng).map_err(|e| e.to_string())?;
            let estimates = run
                .estimates
                .iter()
                .map(|r| match r {
                    Ok(e) => Ok(EstimatePoint { delta_hat: e.delta_hat, se: e.se, covers: e.covers(true_delta) }),
                    Err(e) => Err(e.to_string()),
                })
                .collect();
            let mut diagnostics = run.data.diagnostics;
            for e in run.estimates.iter().flatten() {
                diagnostics.merge(&e.diagnostics);
            }
            Ok(DesignOutcome { estimates, mean_pi2: run.mean_pi2(), diagnostics })
        })
        .collect()
}

/// All replications of a scenario, in index order.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub truth: TrueValues,
    pub replications: Vec<ReplicationOutcome>,
}

pub fn simulate(scenario: &Scenario, exec: Execution) -> Result<Simulation> {
    scenario.validate()?;
    let truth = scenario.true_values()?;
    let delta = truth.delta;
    let replications = exec.map_indexed(scenario.replications, |rep| run_replication(scenario, delta, rep as u64));
    Ok(Simulation { truth, replications })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub design: String,
    pub estimator: EstimatorKind,
    /// Successful replications.
    pub reps: usize,
    pub failures: usize,
    pub mean_estimate: f64,
    pub bias: f64,
    pub emp_var: f64,
    pub emp_sd: f64,
    pub median_se: f64,
    pub rel_eff: f64,
    pub coverage: f64,
    pub mean_pi2: Option<f64>,
    pub valid: bool,
}

#[derive(Debug, Clone)]
pub struct ScenarioSummary {
    pub scenario: String,
    pub setting: String,
    pub gamma1: f64,
    pub x_selector: String,
    pub truth: TrueValues,
    pub replications: usize,
    pub rows: Vec<SummaryRow>,
    pub diagnostics: Diagnostics,
}

impl ScenarioSummary {
    pub fn is_valid(&self) -> bool {
        self.rows.iter().all(|r| r.valid)
    }

    pub fn row(&self, design: &str, estimator: EstimatorKind) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.design == design && r.estimator == estimator)
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().map(|r| r.failures).sum()
    }
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Aggregates `replications` (any prefix of a simulation works).
pub fn summarize(scenario: &Scenario, truth: &TrueValues, replications: &[ReplicationOutcome]) -> ScenarioSummary {
    let total = replications.len();
    let mut rows = Vec::new();
    let mut diagnostics = Diagnostics::default();
    for outcome in replications {
        for d in outcome.iter().flatten() {
            diagnostics.merge(&d.diagnostics);
        }
    }
    for (di, design) in scenario.designs.iter().enumerate() {
        let pi2: Vec<f64> =
            replications.iter().filter_map(|o| o[di].as_ref().ok().and_then(|d| d.mean_pi2)).collect();
        let mean_pi2 = (!pi2.is_empty()).then(|| pi2.iter().sum::<f64>() / pi2.len() as f64);
        for (ei, &estimator) in design.spec.estimators().iter().enumerate() {
            let points: Vec<EstimatePoint> = replications
                .iter()
                .filter_map(|o| o[di].as_ref().ok().and_then(|d| d.estimates[ei].as_ref().ok()).copied())
                .collect();
            let n = points.len();
            let failures = total - n;
            let deltas: Vec<f64> = points.iter().map(|p| p.delta_hat).collect();
            let mean_estimate = deltas.iter().sum::<f64>() / n as f64;
            let emp_var = sample_variance(&deltas).unwrap_or(f64::NAN);
            let mut ses: Vec<f64> = points.iter().map(|p| p.se).collect();
            rows.push(SummaryRow {
                design: design.name.clone(),
                estimator,
                reps: n,
                failures,
                mean_estimate,
                bias: mean_estimate - truth.delta,
                emp_var,
                emp_sd: emp_var.sqrt(),
                median_se: median(&mut ses),
                rel_eff: f64::NAN,
                coverage: points.iter().filter(|p| p.covers).count() as f64 / n as f64,
                mean_pi2,
                valid: n > 0 && failures as f64 <= MAX_FAILURE_RATE * total as f64,
            });
        }
    }
    let reference_var = rows
        .iter()
        .find(|r| r.design == scenario.reference.design && r.estimator == scenario.reference.estimator)
        .map(|r| r.emp_var);
    for r in &mut rows {
        let is_reference = r.design == scenario.reference.design && r.estimator == scenario.reference.estimator;
        r.rel_eff = if is_reference { 1.0 } else { reference_var.map_or(f64::NAN, |v| v / r.emp_var) };
    }
    ScenarioSummary {
        scenario: scenario.name.clone(),
        setting: scenario.setting.clone(),
        gamma1: scenario.population.gamma1,
        x_selector: scenario.selector.to_string(),
        truth: truth.clone(),
        replications: total,
        rows,
        diagnostics,
    }
}

/// Simulates and summarizes a scenario.
pub fn monte_carlo(scenario: &Scenario, exec: Execution) -> Result<ScenarioSummary> {
    let sim = simulate(scenario, exec)?;
    Ok(summarize(scenario, &sim.truth, &sim.replications))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{AdaptationRule, AssignmentMechanism, DesignClass, StageOne, VarianceModel};

    fn scenario(reps: usize) -> Scenario {
        let est = vec![EstimatorKind::Simple, EstimatorKind::Optimized];
        let rule = AdaptationRule::new(DesignClass::Cdr, CovariateSelector::subset(&[2], 3).unwrap(), 0.05, VarianceModel::Logistic)
            .unwrap();
        Scenario {
            name: "test".into(),
            setting: "1".into(),
            population: PopulationSpec::reference(1.0),
            link: Link::Logit,
            selector: CovariateSelector::subset(&[2], 3).unwrap(),
            preliminary_n: 0,
            designs: vec![
                NamedDesign {
                    name: "1S".into(),
                    spec: DesignSpec::new(vec![200], StageOne::Mechanism(AssignmentMechanism::fixed(0.5).unwrap()), vec![], est.clone())
                        .unwrap(),
                },
                NamedDesign {
                    name: "2S".into(),
                    spec: DesignSpec::new(
                        vec![100, 100],
                        StageOne::Mechanism(AssignmentMechanism::fixed(0.5).unwrap()),
                        vec![rule],
                        est,
                    )
                    .unwrap(),
                },
            ],
            reference: Reference { design: "1S".into(), estimator: EstimatorKind::Optimized },
            replications: reps,
            seed: 99,
            level: 0.95,
            truth_budget: TruthBudget { nodes: 32, mc_draws: 10_000, seed: 1 },
        }
    }

    #[test]
    fn reference_has_unit_efficiency_and_rows_are_complete() {
        let s = monte_carlo(&scenario(40), Execution::Sequential).unwrap();
        assert_eq!(s.rows.len(), 4);
        assert_eq!(s.row("1S", EstimatorKind::Optimized).unwrap().rel_eff, 1.0);
        assert!(s.row("1S", EstimatorKind::Simple).unwrap().mean_pi2.is_none());
        assert!(s.row("2S", EstimatorKind::Simple).unwrap().mean_pi2.is_some());
        assert!(s.is_valid());
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let sc = scenario(12);
        let a = simulate(&sc, Execution::Sequential).unwrap();
        let b = simulate(&sc, Execution::Parallel { jobs: 3 }).unwrap();
        assert_eq!(a.replications, b.replications);
    }

    #[test]
    fn prefix_summaries_use_the_same_replications() {
        let sc = scenario(10);
        let sim = simulate(&sc, Execution::Sequential).unwrap();
        let mut short = sc.clone();
        short.replications = 6;
        let sim6 = simulate(&short, Execution::Sequential).unwrap();
        assert_eq!(&sim.replications[..6], &sim6.replications[..]);
    }

    #[test]
    fn validation_lists_every_problem() {
        let mut sc = scenario(0);
        sc.reference.design = "missing".into();
        sc.designs.push(sc.designs[0].clone());
        let msg = sc.validate().unwrap_err().to_string();
        assert!(msg.contains("replications") && msg.contains("missing") && msg.contains("duplicate"), "{msg}");
    }

    #[test]
    fn failures_are_counted_and_invalidate() {
        let mut sc = scenario(5);
        // Tiny stages make empty arms likely.
        sc.designs[1].spec = DesignSpec::new(
            vec![2, 2],
            StageOne::Mechanism(AssignmentMechanism::fixed(0.5).unwrap()),
            sc.designs[1].spec.adaptation().to_vec(),
            vec![EstimatorKind::Simple],
        )
        .unwrap();
        let s = monte_carlo(&sc, Execution::Sequential).unwrap();
        let row = s.row("2S", EstimatorKind::Simple).unwrap();
        assert_eq!(row.reps + row.failures, 5);
        assert!(row.failures > 0);
        assert!(!row.valid && !s.is_valid());
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&mut []).is_nan());
    }
}
