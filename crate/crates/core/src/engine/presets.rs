//! The two simulation settings as ready-made scenarios.

use crate::error::Result;
use crate::link::Link;
use crate::types::{
    AdaptationRule, AssignmentMechanism, CovariateSelector, DesignClass, DesignSpec, EstimatorKind, PopulationSpec,
    StageOne, VarianceModel, DEFAULT_CLAMP,
};

use super::montecarlo::{NamedDesign, Reference, Scenario};
use super::truth::TruthBudget;

pub const STAGE_SIZE: usize = 250;
pub const PRELIMINARY_N: usize = 100;

/// `W1`, `W2`, `W3`, `(W1,W2)`, `(W1,W3)`, `(W2,W3)`, `W`.
pub fn covariate_subsets() -> Vec<CovariateSelector> {
    [&[0][..], &[1], &[2], &[0, 1], &[0, 2], &[1, 2], &[0, 1, 2]]
        .iter()
        .map(|s| CovariateSelector::subset(s, 3).expect("valid subset"))
        .collect()
}

fn rule(class: DesignClass, selector: &CovariateSelector) -> AdaptationRule {
    AdaptationRule::new(class, selector.clone(), DEFAULT_CLAMP, VarianceModel::Logistic).expect("valid rule")
}

fn both() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Simple, EstimatorKind::Optimized]
}

fn named(name: &str, spec: Result<DesignSpec>) -> NamedDesign {
    NamedDesign { name: name.into(), spec: spec.expect("valid design") }
}

fn scenario(setting: &str, gamma1: f64, selector: &CovariateSelector, designs: Vec<NamedDesign>, preliminary_n: usize) -> Scenario {
    Scenario {
        name: format!("setting{setting}-g{gamma1}-{selector}"),
        setting: setting.into(),
        population: PopulationSpec::reference(gamma1),
        link: Link::Logit,
        selector: selector.clone(),
        preliminary_n,
        designs,
        reference: Reference { design: "1S-CIR".into(), estimator: EstimatorKind::Optimized },
        replications: 2000,
        seed: 20_240_601,
        level: 0.95,
        truth_budget: TruthBudget::default(),
    }
}

/// Setting 1: 1:1 stage 1, then optimized CIR or CDR for `selector`.
pub fn setting1(gamma1: f64, selector: &CovariateSelector) -> Scenario {
    let fixed = || StageOne::Mechanism(AssignmentMechanism::Fixed { pi: 0.5 });
    let two = [STAGE_SIZE, STAGE_SIZE].to_vec();
    let designs = vec![
        named("1S-CIR", DesignSpec::new(vec![2 * STAGE_SIZE], fixed(), vec![], both())),
        named("2S-CIR", DesignSpec::new(two.clone(), fixed(), vec![rule(DesignClass::Cir, selector)], both())),
        named("2S-CDR", DesignSpec::new(two, fixed(), vec![rule(DesignClass::Cdr, selector)], both())),
    ];
    scenario("1", gamma1, selector, designs, 0)
}

/// Setting 2: stage 1 optimized on a 1:1 preliminary dataset.
pub fn setting2(gamma1: f64, selector: &CovariateSelector) -> Scenario {
    let opt = |c| StageOne::Optimized(rule(c, selector));
    let two = [STAGE_SIZE, STAGE_SIZE].to_vec();
    let designs = vec![
        named("1S-CIR", DesignSpec::new(vec![2 * STAGE_SIZE], opt(DesignClass::Cir), vec![], both())),
        named("1S-CDR", DesignSpec::new(vec![2 * STAGE_SIZE], opt(DesignClass::Cdr), vec![], both())),
        named("2S-CIR", DesignSpec::new(two.clone(), opt(DesignClass::Cir), vec![rule(DesignClass::Cir, selector)], both())),
        named("2S-CDR", DesignSpec::new(two.clone(), opt(DesignClass::Cdr), vec![rule(DesignClass::Cdr, selector)], both())),
        named("2S-Hybrid", DesignSpec::new(two, opt(DesignClass::Cir), vec![rule(DesignClass::Cdr, selector)], both())),
    ];
    scenario("2", gamma1, selector, designs, PRELIMINARY_N)
}
