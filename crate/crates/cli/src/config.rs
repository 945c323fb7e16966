//! Study configuration: TOML schema, defaults, grid expansion and validation.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use adaptrial::engine::{NamedDesign, Reference, Scenario, TruthBudget};
use adaptrial::{
    AdaptationRule, AssignmentMechanism, CovariateSelector, DesignClass, DesignSpec, EstimatorKind, Link,
    PopulationSpec, SelectedCoord, StageOne, VarianceModel, DEFAULT_CLAMP,
};
use serde::{Deserialize, Serialize};

pub const DEFAULT_LEVEL: f64 = 0.95;
pub const DEFAULT_REPLICATIONS: usize = 2000;
pub const DEFAULT_SEED: u64 = 20_240_601;

/// Every problem found in a configuration, in document order.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ConfigError {
    pub issues: Vec<String>,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid study configuration ({} problem(s)):", self.issues.len())?;
        for issue in &self.issues {
            writeln!(f, "  - {issue}")?;
        }
        Ok(())
    }
}

impl ConfigError {
    fn single(issue: impl Into<String>) -> Self {
        Self { issues: vec![issue.into()] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyFile {
    pub seed: Option<u64>,
    pub replications: Option<usize>,
    pub level: Option<f64>,
    pub clamp: Option<f64>,
    pub link: Option<Link>,
    pub output_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
    #[serde(default)]
    pub grid: Vec<GridFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridFile {
    pub setting: String,
    pub gamma1: Vec<f64>,
    pub x: Vec<String>,
    pub preliminary_n: Option<usize>,
    pub variance_model: Option<VarianceModel>,
    pub reference: String,
    pub replications: Option<usize>,
    pub population: Option<PopulationFile>,
    #[serde(default)]
    pub design: Vec<DesignFile>,
}

/// Overrides of the default simulation population; `gamma1` comes from the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationFile {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub gamma0: f64,
    pub gamma2: Vec<f64>,
    pub gamma3: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignFile {
    pub name: String,
    pub stages: Option<usize>,
    pub stage_sizes: Vec<usize>,
    pub stage1: StageOneFile,
    #[serde(default)]
    pub adapt: Vec<DesignClass>,
    pub estimators: Option<Vec<EstimatorKind>>,
    pub clamp: Option<f64>,
    pub variance_model: Option<VarianceModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum StageOneFile {
    Fixed { pi: f64 },
    Optimized { class: DesignClass },
}

/// A validated study: the normalized file (all defaults written out) and
/// its expansion into scenarios.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub file: StudyFile,
    pub scenarios: Vec<Scenario>,
    pub output_dir: PathBuf,
    pub jobs: Option<usize>,
}

impl StudyConfig {
    pub fn seed(&self) -> u64 {
        self.file.seed.unwrap_or(DEFAULT_SEED)
    }

    /// Re-expands the study with a new seed and/or replication count.
    pub fn with_overrides(self, seed: Option<u64>, replications: Option<usize>) -> Result<Self, ConfigError> {
        let mut file = self.file;
        if let Some(seed) = seed {
            file.seed = Some(seed);
        }
        if let Some(reps) = replications {
            file.replications = Some(reps);
            for g in &mut file.grid {
                g.replications = Some(reps);
            }
        }
        build(normalize(file))
    }

    /// Hex SHA-256 of the normalized configuration.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        Sha256::digest(self.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// TOML of the normalized configuration; parses back to the same study.
    pub fn to_toml(&self) -> String {
        toml::to_string(&self.file).expect("study configuration serializes")
    }
}

pub fn parse_config(path: &Path) -> Result<StudyConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::single(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<StudyConfig, ConfigError> {
    let file: StudyFile = toml::from_str(text).map_err(|e| ConfigError::single(e.to_string()))?;
    build(normalize(file))
}

/// Writes every default into the file structure.
pub fn normalize(mut f: StudyFile) -> StudyFile {
    f.seed.get_or_insert(DEFAULT_SEED);
    let reps = *f.replications.get_or_insert(DEFAULT_REPLICATIONS);
    f.level.get_or_insert(DEFAULT_LEVEL);
    f.clamp.get_or_insert(DEFAULT_CLAMP);
    f.link.get_or_insert(Link::Logit);
    f.output_dir.get_or_insert_with(|| PathBuf::from("results"));
    let clamp = f.clamp.unwrap();
    for g in &mut f.grid {
        g.preliminary_n.get_or_insert(0);
        g.replications.get_or_insert(reps);
        let vm = *g.variance_model.get_or_insert(VarianceModel::Logistic);
        for d in &mut g.design {
            d.stages.get_or_insert(d.stage_sizes.len());
            d.estimators.get_or_insert_with(|| vec![EstimatorKind::Simple, EstimatorKind::Optimized]);
            d.clamp.get_or_insert(clamp);
            d.variance_model.get_or_insert(vm);
        }
    }
    f
}

/// Parses `W`, `W2`, `W1,W3` or `W1>=0,W2>=0.5` for a `dim`-vector.
pub fn parse_selector(text: &str, dim: usize) -> Result<CovariateSelector, String> {
    let text = text.trim();
    if text == "W" {
        return Ok(CovariateSelector::all(dim));
    }
    let mut coords = Vec::new();
    for token in text.split(',') {
        let token = token.trim();
        let (name, threshold) = match token.split_once(">=") {
            Some((n, t)) => {
                let t: f64 = t.trim().parse().map_err(|_| format!("bad threshold in `{token}`"))?;
                (n.trim(), Some(t))
            }
            None => (token, None),
        };
        let index: usize = name
            .strip_prefix('W')
            .and_then(|i| i.parse().ok())
            .filter(|&i| i >= 1)
            .ok_or_else(|| format!("`{token}` is not a covariate (expected W1..W{dim})"))?;
        coords.push(SelectedCoord { index: index - 1, threshold });
    }
    CovariateSelector::new(coords, dim).map_err(|e| format!("selector `{text}`: {e}"))
}

fn parse_reference(text: &str) -> Result<Reference, String> {
    let (design, est) = text.split_once(':').ok_or_else(|| format!("reference `{text}` must be `DESIGN:ESTIMATOR`"))?;
    let estimator = match est.trim() {
        "simple" => EstimatorKind::Simple,
        "optimized" => EstimatorKind::Optimized,
        other => return Err(format!("unknown estimator `{other}` in reference")),
    };
    Ok(Reference { design: design.trim().to_string(), estimator })
}

fn population(p: Option<&PopulationFile>, gamma1: f64) -> Result<PopulationSpec, String> {
    match p {
        None => Ok(PopulationSpec::reference(gamma1)),
        Some(p) => PopulationSpec::new(
            p.mean.clone(),
            p.covariance.clone(),
            p.gamma0,
            gamma1,
            p.gamma2.clone(),
            p.gamma3.clone(),
        )
        .map_err(|e| e.to_string()),
    }
}

fn design(d: &DesignFile, selector: &CovariateSelector, at: &str, issues: &mut Vec<String>) -> Option<DesignSpec> {
    let before = issues.len();
    let k = d.stages.unwrap_or(d.stage_sizes.len());
    if d.name.trim().is_empty() {
        issues.push(format!("{at}.name: must not be empty"));
    }
    if d.stage_sizes.len() != k {
        issues.push(format!("{at}.stage_sizes: {} sizes given for k={k} stages", d.stage_sizes.len()));
    }
    if k >= 1 && d.adapt.len() != k - 1 {
        issues.push(format!("{at}.adapt: {} rules given, k={k} stages need {}", d.adapt.len(), k - 1));
    }
    if k == 0 {
        issues.push(format!("{at}.stages: must be at least 1"));
    }
    if d.stage_sizes.contains(&0) {
        issues.push(format!("{at}.stage_sizes: sizes must be positive"));
    }
    let clamp = d.clamp.unwrap_or(DEFAULT_CLAMP);
    if !(clamp > 0.0 && clamp < 0.5) {
        issues.push(format!("{at}.clamp: must lie in (0, 0.5), got {clamp}"));
    }
    let vm = d.variance_model.unwrap_or(VarianceModel::Logistic);
    if vm == VarianceModel::Empirical && !selector.is_discrete() {
        issues.push(format!("{at}.variance_model: empirical needs a dichotomized X, got `{selector}`"));
    }
    if let StageOneFile::Fixed { pi } = d.stage1 {
        if !(pi > 0.0 && pi < 1.0) {
            issues.push(format!("{at}.stage1.pi: must lie in (0, 1), got {pi}"));
        }
    }
    if d.estimators.as_ref().is_some_and(|e| e.is_empty()) {
        issues.push(format!("{at}.estimators: must not be empty"));
    }
    if issues.len() > before {
        return None;
    }
    let rule = |class| AdaptationRule::new(class, selector.clone(), clamp, vm);
    let stage1 = match d.stage1 {
        StageOneFile::Fixed { pi } => AssignmentMechanism::fixed(pi).map(StageOne::Mechanism),
        StageOneFile::Optimized { class } => rule(class).map(StageOne::Optimized),
    };
    let built = stage1.and_then(|s1| {
        let rules = d.adapt.iter().map(|&c| rule(c)).collect::<adaptrial::Result<Vec<_>>>()?;
        let est = d.estimators.clone().unwrap_or_else(|| vec![EstimatorKind::Simple, EstimatorKind::Optimized]);
        DesignSpec::new(d.stage_sizes.clone(), s1, rules, est)
    });
    match built {
        Ok(spec) => Some(spec),
        Err(e) => {
            issues.push(format!("{at}: {e}"));
            None
        }
    }
}

fn build(file: StudyFile) -> Result<StudyConfig, ConfigError> {
    let mut issues = Vec::new();
    let level = file.level.unwrap_or(DEFAULT_LEVEL);
    if !(level > 0.0 && level < 1.0) {
        issues.push(format!("level: must lie in (0, 1), got {level}"));
    }
    if let Some(c) = file.clamp {
        if !(c > 0.0 && c < 0.5) {
            issues.push(format!("clamp: must lie in (0, 0.5), got {c}"));
        }
    }
    if file.jobs == Some(0) {
        issues.push("jobs: must be at least 1".to_string());
    }
    let mut scenarios = Vec::new();
    let mut names = BTreeSet::new();
    for (gi, g) in file.grid.iter().enumerate() {
        let at = format!("grid[{gi}]");
        let reps = g.replications.unwrap_or(DEFAULT_REPLICATIONS);
        if reps == 0 {
            issues.push(format!("{at}.replications: must be at least 1"));
        }
        if g.gamma1.is_empty() {
            issues.push(format!("{at}.gamma1: list is empty"));
        }
        if g.x.is_empty() {
            issues.push(format!("{at}.x: list is empty"));
        }
        if g.design.is_empty() {
            issues.push(format!("{at}.design: no designs"));
        }
        let reference = parse_reference(&g.reference).map_err(|e| issues.push(format!("{at}.reference: {e}"))).ok();
        let dim = g.population.as_ref().map_or(3, |p| p.mean.len());
        if let Err(e) = population(g.population.as_ref(), 0.0) {
            issues.push(format!("{at}.population: {e}"));
        }
        let mut design_names = BTreeSet::new();
        for (di, d) in g.design.iter().enumerate() {
            if !design_names.insert(d.name.as_str()) {
                issues.push(format!("{at}.design[{di}].name: duplicate design `{}`", d.name));
            }
        }
        if let Some(r) = &reference {
            match g.design.iter().find(|d| d.name == r.design) {
                None => issues.push(format!("{at}.reference: design `{}` is not defined", r.design)),
                Some(d) if !d.estimators.as_ref().is_none_or(|e| e.contains(&r.estimator)) => {
                    issues.push(format!("{at}.reference: design `{}` does not run `{}`", r.design, r.estimator))
                }
                Some(_) => {}
            }
        }
        let preliminary_n = g.preliminary_n.unwrap_or(0);
        for (di, d) in g.design.iter().enumerate() {
            if matches!(d.stage1, StageOneFile::Optimized { .. }) && preliminary_n == 0 {
                issues.push(format!("{at}.design[{di}].stage1: optimized stage 1 needs preliminary_n > 0"));
            }
        }
        let mut selectors = Vec::new();
        for (xi, x) in g.x.iter().enumerate() {
            match parse_selector(x, dim) {
                Ok(s) if s.dim() == 0 => issues.push(format!("{at}.x[{xi}]: X must be non-empty")),
                Ok(s) => selectors.push(s),
                Err(e) => issues.push(format!("{at}.x[{xi}]: {e}")),
            }
        }
        for selector in &selectors {
            let mut designs = Vec::new();
            for (di, d) in g.design.iter().enumerate() {
                if let Some(spec) = design(d, selector, &format!("{at}.design[{di}]"), &mut issues) {
                    designs.push(NamedDesign { name: d.name.clone(), spec });
                }
            }
            for &gamma1 in &g.gamma1 {
                let (Ok(pop), Some(reference)) = (population(g.population.as_ref(), gamma1), reference.clone()) else {
                    continue;
                };
                if designs.len() != g.design.len() {
                    continue;
                }
                let name = format!("setting{}-g{}-{}", g.setting, gamma1, selector);
                if !names.insert(name.clone()) {
                    issues.push(format!("{at}: scenario `{name}` is defined twice"));
                    continue;
                }
                scenarios.push(Scenario {
                    name,
                    setting: g.setting.clone(),
                    population: pop,
                    link: file.link.unwrap_or(Link::Logit),
                    selector: selector.clone(),
                    preliminary_n,
                    designs: designs.clone(),
                    reference,
                    replications: reps,
                    seed: file.seed.unwrap_or(DEFAULT_SEED),
                    level,
                    truth_budget: TruthBudget::default(),
                });
            }
        }
    }
    // Design errors repeat once per X; report each once.
    let mut seen = BTreeSet::new();
    issues.retain(|i| seen.insert(i.clone()));
    if !issues.is_empty() {
        return Err(ConfigError { issues });
    }
    Ok(StudyConfig {
        output_dir: file.output_dir.clone().unwrap_or_else(|| PathBuf::from("results")),
        jobs: file.jobs,
        file,
        scenarios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [[grid]]
        setting = "1"
        gamma1 = [1.0]
        x = ["W3"]
        reference = "1S:optimized"

        [[grid.design]]
        name = "1S"
        stage_sizes = [500]
        stage1 = { kind = "fixed", pi = 0.5 }
    "#;

    #[test]
    fn minimal_config_materializes_defaults() {
        let c = parse_config_str(MINIMAL).unwrap();
        assert_eq!(c.file.replications, Some(DEFAULT_REPLICATIONS));
        assert_eq!(c.file.level, Some(0.95));
        assert_eq!(c.file.clamp, Some(0.05));
        assert_eq!(c.file.seed, Some(DEFAULT_SEED));
        let d = &c.file.grid[0].design[0];
        assert_eq!(d.stages, Some(1));
        assert_eq!(d.estimators.as_deref(), Some(&[EstimatorKind::Simple, EstimatorKind::Optimized][..]));
        assert_eq!(c.scenarios.len(), 1);
        let s = &c.scenarios[0];
        assert_eq!(s.replications, 2000);
        assert_eq!(s.name, "setting1-g1-W3");
        assert_eq!(s.population, PopulationSpec::reference(1.0));
    }

    #[test]
    fn stage_count_mismatch_names_the_field() {
        let text = MINIMAL.replace("stage_sizes = [500]", "stages = 2\n        stage_sizes = [250]");
        let err = parse_config_str(&text).unwrap_err();
        assert!(err.issues.iter().any(|i| i.contains("grid[0].design[0].stage_sizes")), "{err}");
        assert!(err.issues.iter().any(|i| i.contains("grid[0].design[0].adapt")), "{err}");
    }

    #[test]
    fn all_problems_are_listed() {
        let text = r#"
            level = 1.5
            [[grid]]
            setting = "1"
            gamma1 = []
            x = ["W9", "V1"]
            reference = "nope:optimized"
            [[grid.design]]
            name = "a"
            stage_sizes = [10, 10]
            stage1 = { kind = "fixed", pi = 1.5 }
        "#;
        let err = parse_config_str(text).unwrap_err();
        for needle in ["level", "gamma1", "x[0]", "x[1]", "reference"] {
            assert!(err.issues.iter().any(|i| i.contains(needle)), "missing {needle}: {err}");
        }
    }

    #[test]
    fn unknown_fields_are_rejected_with_location() {
        let err = parse_config_str("seeed = 3").unwrap_err();
        assert!(err.issues[0].contains("seeed"), "{err}");
    }

    #[test]
    fn selectors_parse() {
        assert_eq!(parse_selector("W", 3).unwrap(), CovariateSelector::all(3));
        assert_eq!(parse_selector("W1, W3", 3).unwrap(), CovariateSelector::subset(&[0, 2], 3).unwrap());
        let t = parse_selector("W2>=0.5", 3).unwrap();
        assert_eq!(t.coords()[0], SelectedCoord { index: 1, threshold: Some(0.5) });
        assert_eq!(t.to_string(), "W2>=0.5");
        assert!(parse_selector("W0", 3).is_err());
        assert!(parse_selector("W4", 3).is_err());
        assert!(parse_selector("W1>=x", 3).is_err());
    }

    #[test]
    fn normalized_config_round_trips() {
        let c = parse_config_str(MINIMAL).unwrap();
        let again = parse_config_str(&c.to_toml()).unwrap();
        assert_eq!(again, c);
        assert_eq!(normalize(again.file.clone()), again.file);
    }

    #[test]
    fn empirical_model_needs_discrete_selector() {
        let text = MINIMAL.replace("x = [\"W3\"]", "x = [\"W3\", \"W3>=0\"]\n        variance_model = \"empirical\"");
        let text = text.replace("stage_sizes = [500]", "stage_sizes = [250, 250]\n        adapt = [\"cdr\"]");
        let err = parse_config_str(&text).unwrap_err();
        assert_eq!(err.issues.len(), 1, "{err}");
        assert!(err.issues[0].contains("variance_model"));
    }
}
