//! Data generation, the stage loop of one trial, and the Monte Carlo harness.

pub mod dgp;
pub mod exec;
pub mod montecarlo;
pub mod presets;
pub mod quadrature;
pub mod trial;
pub mod truth;

pub use dgp::{draw_covariates, draw_pilot, draw_pool, draw_potential_outcomes, substream, Patient};
pub use exec::Execution;
pub use montecarlo::{
    monte_carlo, run_replication, simulate, summarize, DesignOutcome, EstimatePoint, NamedDesign, Reference,
    ReplicationOutcome, Scenario, ScenarioSummary, Simulation, SummaryRow, MAX_FAILURE_RATE,
};
pub use trial::{run_trial, TrialInputs, TrialRun};
pub use truth::{true_marginals, TrueValues, TruthBudget};
