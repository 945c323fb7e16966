//! Domain types shared across the crate: arms, patient records, assignment
//! mechanisms, and the design and population specifications.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::{expit, Link};
use crate::linalg::psd_cholesky;
use crate::randomization::allocation_from_terms;

/// Floor applied to estimated conditional variances.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Default clamp keeping assignment probabilities inside `[eps, 1 - eps]`.
pub const DEFAULT_CLAMP: f64 = 0.05;

/// Treatment arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Arm {
    Control,
    Treatment,
}

impl Arm {
    pub fn from_indicator(value: u8) -> Result<Self> {
        match value {
            0 => Ok(Arm::Control),
            1 => Ok(Arm::Treatment),
            other => Err(Error::InvalidArgument(format!("arm indicator must be 0 or 1, got {other}"))),
        }
    }

    pub fn value(self) -> u8 {
        match self {
            Arm::Control => 0,
            Arm::Treatment => 1,
        }
    }

    /// The arm indicator as a real number, `A` in the estimating formulas.
    pub fn indicator(self) -> f64 {
        self.value() as f64
    }

    pub fn is_treatment(self) -> bool {
        self == Arm::Treatment
    }

    /// Probability of landing in this arm when `P(A = 1) = p`.
    pub fn probability(self, p: f64) -> f64 {
        match self {
            Arm::Treatment => p,
            Arm::Control => 1.0 - p,
        }
    }
}

/// One observed patient `(W, A, Y)` tagged with its stage (1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct PatientRecord {
    pub stage: usize,
    pub w: Vec<f64>,
    pub arm: Arm,
    pub y: f64,
}

/// One coordinate kept by a [`CovariateSelector`], optionally dichotomized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectedCoord {
    pub index: usize,
    /// `Some(t)` maps the coordinate to `1` when `w >= t` and `0` otherwise.
    pub threshold: Option<f64>,
}

/// Coarsening `X` of the baseline covariates `W`: a subset of coordinates,
/// each optionally dichotomized at a threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateSelector {
    coords: Vec<SelectedCoord>,
    full_dim: usize,
}

impl CovariateSelector {
    pub fn new(coords: Vec<SelectedCoord>, full_dim: usize) -> Result<Self> {
        if coords.len() > 31 {
            return Err(Error::InvalidArgument("at most 31 selected covariates are supported".into()));
        }
        for (i, c) in coords.iter().enumerate() {
            if c.index >= full_dim {
                return Err(Error::InvalidArgument(format!(
                    "covariate index {} out of range for dimension {full_dim}",
                    c.index
                )));
            }
            if coords[..i].iter().any(|o| o.index == c.index) {
                return Err(Error::InvalidArgument(format!("covariate index {} selected twice", c.index)));
            }
            if matches!(c.threshold, Some(t) if !t.is_finite()) {
                return Err(Error::InvalidArgument("dichotomization threshold must be finite".into()));
            }
        }
        Ok(Self { coords, full_dim })
    }

    /// Every coordinate of `W`, untransformed.
    pub fn all(full_dim: usize) -> Self {
        Self::subset(&(0..full_dim).collect::<Vec<_>>(), full_dim).expect("indices in range")
    }

    /// Coordinates `indices` of `W`, untransformed.
    pub fn subset(indices: &[usize], full_dim: usize) -> Result<Self> {
        Self::new(
            indices.iter().map(|&index| SelectedCoord { index, threshold: None }).collect(),
            full_dim,
        )
    }

    /// No covariates at all; every patient falls in a single cell.
    pub fn empty(full_dim: usize) -> Self {
        Self { coords: Vec::new(), full_dim }
    }

    pub fn coords(&self) -> &[SelectedCoord] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn full_dim(&self) -> usize {
        self.full_dim
    }

    /// True when every selected coordinate is dichotomized, so `X` takes
    /// finitely many values.
    pub fn is_discrete(&self) -> bool {
        self.coords.iter().all(|c| c.threshold.is_some())
    }

    pub fn apply_into(&self, w: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.coords.iter().map(|c| match c.threshold {
            Some(t) => {
                if w[c.index] >= t {
                    1.0
                } else {
                    0.0
                }
            }
            None => w[c.index],
        }));
    }

    pub fn apply(&self, w: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.coords.len());
        self.apply_into(w, &mut out);
        out
    }

    /// Cell index of a discrete selector: bit `j` is set when coordinate `j`
    /// is at or above its threshold. Untransformed coordinates are ignored.
    pub fn cell(&self, w: &[f64]) -> u32 {
        let mut key = 0u32;
        for (j, c) in self.coords.iter().enumerate() {
            if let Some(t) = c.threshold {
                if w[c.index] >= t {
                    key |= 1 << j;
                }
            }
        }
        key
    }

    /// The `X` vector corresponding to a cell index.
    pub fn cell_values(&self, cell: u32) -> Vec<f64> {
        (0..self.coords.len()).map(|j| ((cell >> j) & 1) as f64).collect()
    }

    pub fn n_cells(&self) -> u32 {
        1 << self.coords.len()
    }
}

impl fmt::Display for CovariateSelector {
    /// `W` for the full untransformed vector, otherwise a comma list such as
    /// `W1,W3` or `W1>=0,W2`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coords.is_empty() {
            return f.write_str("none");
        }
        let full = self.coords.len() == self.full_dim
            && self.full_dim > 1
            && self.coords.iter().enumerate().all(|(i, c)| c.index == i && c.threshold.is_none());
        if full {
            return f.write_str("W");
        }
        let parts: Vec<String> = self
            .coords
            .iter()
            .map(|c| match c.threshold {
                Some(t) => format!("W{}>={}", c.index + 1, t),
                None => format!("W{}", c.index + 1),
            })
            .collect();
        f.write_str(&parts.join(","))
    }
}

/// Randomization family of a stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DesignClass {
    /// Covariate-independent randomization: one probability for everyone.
    Cir,
    /// Covariate-dependent randomization: probability depends on `X`.
    Cdr,
}

/// How the interim analysis estimates the conditional variances `v_a(X)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceModel {
    /// Per-cell sample variances; needs a discrete selector.
    Empirical,
    /// Logistic working model on `(A, X, A X)`, `v = m (1 - m)`.
    Logistic,
}

/// Interim re-optimization rule applied before a stage.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationRule {
    pub design_class: DesignClass,
    pub selector: CovariateSelector,
    pub clamp: f64,
    pub variance_model: VarianceModel,
}

impl AdaptationRule {
    pub fn new(
        design_class: DesignClass,
        selector: CovariateSelector,
        clamp: f64,
        variance_model: VarianceModel,
    ) -> Result<Self> {
        let rule = Self { design_class, selector, clamp, variance_model };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.clamp > 0.0 && self.clamp < 0.5) {
            return Err(Error::InvalidArgument(format!("clamp must lie in (0, 0.5), got {}", self.clamp)));
        }
        if self.variance_model == VarianceModel::Empirical && !self.selector.is_discrete() {
            return Err(Error::InvalidArgument(
                "empirical variance model needs every selected covariate dichotomized".into(),
            ));
        }
        Ok(())
    }
}

/// Working-model coefficients and plug-in quantities that define an
/// estimated optimal propensity score.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkingPropensity {
    pub selector: CovariateSelector,
    /// Coefficients on `[1, A, X, A X]`.
    pub coefficients: Vec<f64>,
    pub mu1: f64,
    pub mu0: f64,
    pub link: Link,
    pub clamp: f64,
    /// `g'(mu1)` and `g'(mu0)`, cached.
    pub g1: f64,
    pub g0: f64,
}

impl WorkingPropensity {
    pub fn new(
        selector: CovariateSelector,
        coefficients: Vec<f64>,
        mu1: f64,
        mu0: f64,
        link: Link,
        clamp: f64,
    ) -> Result<Self> {
        let expected = 2 + 2 * selector.dim();
        if coefficients.len() != expected {
            return Err(Error::DimensionMismatch { expected, found: coefficients.len() });
        }
        let g1 = link.deriv(link.guard(mu1))?;
        let g0 = link.deriv(link.guard(mu0))?;
        Ok(Self { selector, coefficients, mu1, mu0, link, clamp, g1, g0 })
    }

    /// Fitted `m_a(x)` under the working model.
    pub fn mean(&self, arm: Arm, x: &[f64]) -> f64 {
        let a = arm.indicator();
        let q = x.len();
        let c = &self.coefficients;
        let mut eta = c[0] + a * c[1];
        for j in 0..q {
            eta += x[j] * (c[2 + j] + a * c[2 + q + j]);
        }
        expit(eta)
    }

    pub fn probability(&self, w: &[f64]) -> f64 {
        let x = self.selector.apply(w);
        let v1 = conditional_variance_binary(self.mean(Arm::Treatment, &x));
        let v0 = conditional_variance_binary(self.mean(Arm::Control, &x));
        allocation_from_terms(self.g1 * v1.sqrt(), self.g0 * v0.sqrt(), self.clamp)
            .expect("floored variances are positive")
    }
}

/// `m (1 - m)` floored at [`VARIANCE_FLOOR`].
pub fn conditional_variance_binary(m: f64) -> f64 {
    (m * (1.0 - m)).max(VARIANCE_FLOOR)
}

/// Treatment assignment mechanism of one stage.
#[derive(Debug, Clone, PartialEq)]
pub enum AssignmentMechanism {
    /// Covariate-independent: `P(A = 1) = pi`.
    Fixed { pi: f64 },
    /// Covariate-dependent with one probability per discrete cell of `X`.
    Table { selector: CovariateSelector, cells: BTreeMap<u32, f64> },
    /// Covariate-dependent logistic propensity `expit(b0 + b'X)`.
    Logistic { selector: CovariateSelector, coefficients: Vec<f64> },
    /// Covariate-dependent optimal propensity implied by a fitted working model.
    Working(WorkingPropensity),
}

/// A propensity resolved for one patient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolved {
    pub p: f64,
    /// The patient's cell had no entry in a [`AssignmentMechanism::Table`]; `p`
    /// is the 0.5 fallback.
    pub missing_cell: bool,
}

impl AssignmentMechanism {
    pub fn fixed(pi: f64) -> Result<Self> {
        if !(pi > 0.0 && pi < 1.0) {
            return Err(Error::InvalidArgument(format!("assignment probability must lie in (0, 1), got {pi}")));
        }
        Ok(AssignmentMechanism::Fixed { pi })
    }

    pub fn is_cir(&self) -> bool {
        matches!(self, AssignmentMechanism::Fixed { .. })
    }

    pub fn resolve(&self, w: &[f64]) -> Resolved {
        match self {
            AssignmentMechanism::Fixed { pi } => Resolved { p: *pi, missing_cell: false },
            AssignmentMechanism::Table { selector, cells } => match cells.get(&selector.cell(w)) {
                Some(&p) => Resolved { p, missing_cell: false },
                None => Resolved { p: 0.5, missing_cell: true },
            },
            AssignmentMechanism::Logistic { selector, coefficients } => {
                let x = selector.apply(w);
                let eta = coefficients[0] + x.iter().zip(&coefficients[1..]).map(|(a, b)| a * b).sum::<f64>();
                Resolved { p: expit(eta), missing_cell: false }
            }
            AssignmentMechanism::Working(model) => Resolved { p: model.probability(w), missing_cell: false },
        }
    }

    /// `p(w)`, with the 0.5 fallback for unseen table cells.
    pub fn propensity(&self, w: &[f64]) -> f64 {
        self.resolve(w).p
    }

    /// Checks that every stored probability lies in `[clamp, 1 - clamp]`.
    pub fn validate(&self, clamp: f64) -> Result<()> {
        let ok = |p: f64| p >= clamp - 1e-15 && p <= 1.0 - clamp + 1e-15;
        match self {
            AssignmentMechanism::Fixed { pi } if !ok(*pi) => {
                Err(Error::InvalidArgument(format!("probability {pi} outside [{clamp}, {}]", 1.0 - clamp)))
            }
            AssignmentMechanism::Table { cells, .. } => match cells.values().find(|p| !ok(**p)) {
                Some(p) => Err(Error::InvalidArgument(format!("cell probability {p} outside clamp range"))),
                None => Ok(()),
            },
            AssignmentMechanism::Logistic { selector, coefficients } if coefficients.len() != selector.dim() + 1 => {
                Err(Error::DimensionMismatch { expected: selector.dim() + 1, found: coefficients.len() })
            }
            _ => Ok(()),
        }
    }
}

/// How stage 1 assigns treatment.
#[derive(Debug, Clone, PartialEq)]
pub enum StageOne {
    /// A pre-specified mechanism.
    Mechanism(AssignmentMechanism),
    /// Optimized from preliminary data before the trial starts.
    Optimized(AdaptationRule),
}

/// Which estimator to report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    /// Sample-size weights, (Hajek) treatment-group means, no augmentation.
    Simple,
    /// Estimated optimal stage weights and augmentation.
    Optimized,
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorKind::Simple => "simple",
            EstimatorKind::Optimized => "optimized",
        })
    }
}

/// Trial protocol: stage sizes, the stage-1 mechanism, and the rule used at
/// each interim analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    stage_sizes: Vec<usize>,
    stage1: StageOne,
    /// Rules for stages `2..=k`.
    adaptation: Vec<AdaptationRule>,
    estimators: Vec<EstimatorKind>,
}

impl DesignSpec {
    pub fn new(
        stage_sizes: Vec<usize>,
        stage1: StageOne,
        adaptation: Vec<AdaptationRule>,
        estimators: Vec<EstimatorKind>,
    ) -> Result<Self> {
        if stage_sizes.is_empty() {
            return Err(Error::InvalidArgument("a design needs at least one stage".into()));
        }
        if stage_sizes.contains(&0) {
            return Err(Error::InvalidArgument("stage sizes must be positive".into()));
        }
        if adaptation.len() + 1 != stage_sizes.len() {
            return Err(Error::InvalidArgument(format!(
                "{} stages need {} adaptation rules, got {}",
                stage_sizes.len(),
                stage_sizes.len() - 1,
                adaptation.len()
            )));
        }
        for rule in &adaptation {
            rule.validate()?;
        }
        match &stage1 {
            StageOne::Mechanism(m) => m.validate(0.0)?,
            StageOne::Optimized(rule) => rule.validate()?,
        }
        if estimators.is_empty() {
            return Err(Error::InvalidArgument("at least one estimator must be requested".into()));
        }
        Ok(Self { stage_sizes, stage1, adaptation, estimators })
    }

    /// Single-stage design with a fixed mechanism.
    pub fn one_stage(n: usize, mechanism: AssignmentMechanism) -> Result<Self> {
        Self::new(
            vec![n],
            StageOne::Mechanism(mechanism),
            Vec::new(),
            vec![EstimatorKind::Simple, EstimatorKind::Optimized],
        )
    }

    pub fn k(&self) -> usize {
        self.stage_sizes.len()
    }

    pub fn stage_sizes(&self) -> &[usize] {
        &self.stage_sizes
    }

    pub fn total_size(&self) -> usize {
        self.stage_sizes.iter().sum()
    }

    pub fn stage1(&self) -> &StageOne {
        &self.stage1
    }

    pub fn adaptation(&self) -> &[AdaptationRule] {
        &self.adaptation
    }

    pub fn estimators(&self) -> &[EstimatorKind] {
        &self.estimators
    }

    pub fn needs_preliminary(&self) -> bool {
        matches!(self.stage1, StageOne::Optimized(_))
    }
}

/// Outcome family of the data-generating process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeKind {
    /// Bernoulli potential outcomes with a logistic mean model.
    Binary,
}

/// Ground-truth data-generating process: multivariate normal covariates and a
/// logistic model for each potential outcome,
/// `logit P(Y(a) = 1 | W) = g0 + g1 a + g2'W + g3'(a W)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSpec {
    mean: Vec<f64>,
    covariance: Vec<Vec<f64>>,
    factor: Vec<Vec<f64>>,
    pub gamma0: f64,
    pub gamma1: f64,
    pub gamma2: Vec<f64>,
    pub gamma3: Vec<f64>,
    pub outcome: OutcomeKind,
}

impl PopulationSpec {
    pub fn new(
        mean: Vec<f64>,
        covariance: Vec<Vec<f64>>,
        gamma0: f64,
        gamma1: f64,
        gamma2: Vec<f64>,
        gamma3: Vec<f64>,
    ) -> Result<Self> {
        let d = mean.len();
        if covariance.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: covariance.len() });
        }
        for g in [&gamma2, &gamma3] {
            if g.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: g.len() });
            }
        }
        let factor = psd_cholesky(&covariance)?;
        Ok(Self {
            mean,
            covariance,
            factor,
            gamma0,
            gamma1,
            gamma2,
            gamma3,
            outcome: OutcomeKind::Binary,
        })
    }

    /// The simulation population: `W ~ N(0, 0.5 I_3)`, `g0 = -2.5`,
    /// `g2 = (-0.2, -0.2, 0.2)`, `g3 = (1, -1, -1.5)`.
    pub fn reference(gamma1: f64) -> Self {
        let cov = (0..3).map(|i| (0..3).map(|j| if i == j { 0.5 } else { 0.0 }).collect()).collect();
        Self::new(vec![0.0; 3], cov, -2.5, gamma1, vec![-0.2, -0.2, 0.2], vec![1.0, -1.0, -1.5])
            .expect("reference population is valid")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn covariance(&self) -> &[Vec<f64>] {
        &self.covariance
    }

    /// Lower Cholesky-type factor of the covariance.
    pub fn factor(&self) -> &[Vec<f64>] {
        &self.factor
    }

    pub fn linear_predictor(&self, arm: Arm, w: &[f64]) -> f64 {
        let a = arm.indicator();
        let mut eta = self.gamma0 + self.gamma1 * a;
        for j in 0..w.len() {
            eta += w[j] * (self.gamma2[j] + a * self.gamma3[j]);
        }
        eta
    }

    /// True `m_a(w) = E{Y(a) | W = w}`.
    pub fn outcome_mean(&self, arm: Arm, w: &[f64]) -> f64 {
        expit(self.linear_predictor(arm, w))
    }
}

/// Non-fatal events counted while running a trial.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Patients assigned with the 0.5 fallback because their cell was unseen.
    pub missing_cell_assignments: u64,
    /// Interim analyses that kept the previous mechanism.
    pub interim_fallbacks: u64,
    /// Logistic fits that stopped without meeting the score tolerance.
    pub nonconverged_fits: u64,
    /// Columns dropped from rank-deficient logistic designs.
    pub dropped_columns: u64,
}

impl Diagnostics {
    pub fn merge(&mut self, other: &Diagnostics) {
        self.missing_cell_assignments += other.missing_cell_assignments;
        self.interim_fallbacks += other.interim_fallbacks;
        self.nonconverged_fits += other.nonconverged_fits;
        self.dropped_columns += other.dropped_columns;
    }
}

/// Records of one stage together with the mechanism that assigned them.
#[derive(Debug, Clone, Copy)]
pub struct StageView<'a> {
    pub records: &'a [PatientRecord],
    pub mechanism: &'a AssignmentMechanism,
}

/// Preliminary data collected before the trial.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotData {
    pub records: Vec<PatientRecord>,
    pub mechanism: AssignmentMechanism,
}

impl PilotData {
    pub fn view(&self) -> StageView<'_> {
        StageView { records: &self.records, mechanism: &self.mechanism }
    }
}

/// Everything an analysis sees from one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialData {
    stage_sizes: Vec<usize>,
    records: Vec<PatientRecord>,
    realized_mechanisms: Vec<AssignmentMechanism>,
    pub pilot: Option<PilotData>,
    pub diagnostics: Diagnostics,
}

impl TrialData {
    /// Builds a trial from stage-ordered records. Each record's `stage`
    /// field must match its position.
    pub fn new(
        stage_sizes: Vec<usize>,
        records: Vec<PatientRecord>,
        realized_mechanisms: Vec<AssignmentMechanism>,
    ) -> Result<Self> {
        if stage_sizes.is_empty() || realized_mechanisms.len() != stage_sizes.len() {
            return Err(Error::InvalidArgument(format!(
                "{} stages but {} realized mechanisms",
                stage_sizes.len(),
                realized_mechanisms.len()
            )));
        }
        let total: usize = stage_sizes.iter().sum();
        if records.len() != total {
            return Err(Error::DimensionMismatch { expected: total, found: records.len() });
        }
        let mut offset = 0;
        for (s, &n) in stage_sizes.iter().enumerate() {
            if let Some(r) = records[offset..offset + n].iter().find(|r| r.stage != s + 1) {
                return Err(Error::InvalidArgument(format!(
                    "record tagged stage {} found in stage {} block",
                    r.stage,
                    s + 1
                )));
            }
            offset += n;
        }
        if let Some(first) = records.first() {
            let d = first.w.len();
            if let Some(r) = records.iter().find(|r| r.w.len() != d) {
                return Err(Error::DimensionMismatch { expected: d, found: r.w.len() });
            }
        }
        Ok(Self { stage_sizes, records, realized_mechanisms, pilot: None, diagnostics: Diagnostics::default() })
    }

    /// Groups unordered records by their `stage` tags.
    pub fn from_records(mut records: Vec<PatientRecord>, realized_mechanisms: Vec<AssignmentMechanism>) -> Result<Self> {
        let k = realized_mechanisms.len();
        if let Some(r) = records.iter().find(|r| r.stage == 0 || r.stage > k) {
            return Err(Error::InvalidArgument(format!("record stage {} outside 1..={k}", r.stage)));
        }
        records.sort_by_key(|r| r.stage);
        let mut sizes = vec![0; k];
        for r in &records {
            sizes[r.stage - 1] += 1;
        }
        Self::new(sizes, records, realized_mechanisms)
    }

    pub fn k(&self) -> usize {
        self.stage_sizes.len()
    }

    pub fn stage_sizes(&self) -> &[usize] {
        &self.stage_sizes
    }

    pub fn records(&self) -> &[PatientRecord] {
        &self.records
    }

    pub fn realized_mechanisms(&self) -> &[AssignmentMechanism] {
        &self.realized_mechanisms
    }

    /// Stage `s` (0-based).
    pub fn stage(&self, s: usize) -> StageView<'_> {
        let start: usize = self.stage_sizes[..s].iter().sum();
        StageView {
            records: &self.records[start..start + self.stage_sizes[s]],
            mechanism: &self.realized_mechanisms[s],
        }
    }

    pub fn stages(&self) -> impl Iterator<Item = StageView<'_>> {
        (0..self.k()).map(move |s| self.stage(s))
    }
}
