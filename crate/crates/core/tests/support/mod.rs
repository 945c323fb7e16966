//! Checks shared by the integration tests and the acceptance target. Each
//! returns a one-line detail on success and a description of the first
//! mismatch otherwise.

#![allow(dead_code)]

use adaptrial::estimators::{
    aipw_delta, augmentation_column, augmented_delta, estimate_full, final_variance, optimal_augmentation_cdr,
    optimal_augmentation_cir, optimal_weights, stage_mean_ipw, stage_variance, weighted_delta, Augmentation,
    CovariateFn, Nuisance,
};
use adaptrial::link::expit;
use adaptrial::models::{fit_logistic_irls, DesignMatrix, LogisticOptions};
use adaptrial::randomization::{allocation_from_terms, optimal_pi, optimal_propensity, AllocationInputs};
use adaptrial::{Arm, AssignmentMechanism, CovariateSelector, EstimatorKind, Link, PatientRecord, SelectedCoord, TrialData};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use serde_json::Value;

pub type Check = Result<String, String>;

const ORACLE: &str = include_str!("../data/oracle.json");

pub struct Oracle {
    json: Value,
    pub cir: TrialData,
    pub cdr: TrialData,
    pub mu1: f64,
    pub mu0: f64,
    pub theta: f64,
}

fn coefs(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn mechanism(v: &Value) -> AssignmentMechanism {
    match v["kind"].as_str().unwrap() {
        "fixed" => AssignmentMechanism::fixed(v["pi"].as_f64().unwrap()).unwrap(),
        "logistic" => {
            let index = v["index"].as_u64().unwrap() as usize;
            let selector = CovariateSelector::new(vec![SelectedCoord { index, threshold: None }], 2).unwrap();
            AssignmentMechanism::Logistic { selector, coefficients: coefs(&v["coefficients"]) }
        }
        other => panic!("unknown mechanism {other}"),
    }
}

fn trial(v: &Value) -> TrialData {
    let records = v["records"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| PatientRecord {
            stage: r["stage"].as_u64().unwrap() as usize,
            w: coefs(&r["w"]),
            arm: Arm::from_indicator(r["a"].as_u64().unwrap() as u8).unwrap(),
            y: r["y"].as_f64().unwrap(),
        })
        .collect();
    let mechs = v["mechanisms"].as_array().unwrap().iter().map(mechanism).collect();
    TrialData::from_records(records, mechs).unwrap()
}

impl Oracle {
    pub fn load() -> Self {
        let json: Value = serde_json::from_str(ORACLE).expect("oracle fixture parses");
        Oracle {
            cir: trial(&json["cir"]),
            cdr: trial(&json["cdr"]),
            mu1: json["mu1"].as_f64().unwrap(),
            mu0: json["mu0"].as_f64().unwrap(),
            theta: json["theta"].as_f64().unwrap(),
            json,
        }
    }

    /// The fixture's outcome regression.
    pub fn model(&self) -> impl Fn(Arm, &[f64]) -> f64 + Sync + '_ {
        move |arm: Arm, w: &[f64]| {
            let b = coefs(&self.json["model"][if arm.is_treatment() { "m1" } else { "m0" }]);
            expit(b[0] + b[1] * w[0] + b[2] * w[1])
        }
    }

    fn cases(&self) -> impl Iterator<Item = (Link, &Value)> {
        self.json["cases"].as_array().unwrap().iter().map(|c| {
            let link = match c["link"].as_str().unwrap() {
                "identity" => Link::Identity,
                "log" => Link::Log,
                _ => Link::Logit,
            };
            (link, c)
        })
    }
}

fn closures<'a>(augs: &'a [Augmentation<'a>]) -> Vec<impl Fn(&[f64]) -> f64 + 'a> {
    augs.iter().map(|a| move |w: &[f64]| a.eval(w)).collect()
}

fn refs<'a>(fns: &'a [impl Fn(&[f64]) -> f64]) -> Vec<CovariateFn<'a>> {
    fns.iter().map(|f| f as CovariateFn<'a>).collect()
}

fn close(what: &str, got: f64, want: f64, tol: f64, worst: &mut f64) -> Result<(), String> {
    let err = (got - want).abs();
    *worst = worst.max(err);
    if err <= tol {
        Ok(())
    } else {
        Err(format!("{what}: got {got:.15}, oracle {want:.15} (|diff| {err:.2e})"))
    }
}

/// Every estimator building block against the direct evaluation.
pub fn oracle_equivalence(tol: f64) -> Check {
    let o = Oracle::load();
    let model = o.model();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (link, case) in o.cases() {
        let name = |f: &str| format!("{link:?} {f}");
        let (pi1, pi2) = match (o.cir.stage(0).mechanism, o.cir.stage(1).mechanism) {
            (AssignmentMechanism::Fixed { pi: a }, AssignmentMechanism::Fixed { pi: b }) => (*a, *b),
            _ => return Err("cir fixture must be covariate-independent".into()),
        };
        let (b1, b2) = optimal_augmentation_cir(link, o.mu1, o.mu0, &model, pi1, pi2, o.theta).map_err(|e| e.to_string())?;
        let got = augmented_delta(&o.cir, link, o.theta, &|w| b1.eval(w), &|w| b2.eval(w)).map_err(|e| e.to_string())?;
        close(&name("augmented_delta"), got, case["augmented_delta"].as_f64().unwrap(), tol, &mut worst)?;

        let sigma2: Vec<f64> = o
            .cdr
            .stages()
            .map(|v| stage_variance(v.records, v.mechanism, link, o.mu1, o.mu0, &model))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        for (s, (got, want)) in sigma2.iter().zip(coefs(&case["stage_variance"])).enumerate() {
            close(&name(&format!("stage_variance[{s}]")), *got, want, tol, &mut worst)?;
        }
        let eta = optimal_weights(o.cdr.stage_sizes(), &sigma2).map_err(|e| e.to_string())?.weights;
        for (s, (got, want)) in eta.iter().zip(coefs(&case["optimal_weights"])).enumerate() {
            close(&name(&format!("optimal_weights[{s}]")), *got, want, tol, &mut worst)?;
        }
        let augs = optimal_augmentation_cdr(link, o.mu1, o.mu0, &model, o.cdr.realized_mechanisms(), &eta)
            .map_err(|e| e.to_string())?;
        let fns = closures(&augs);
        let c = refs(&fns);
        let got = aipw_delta(&o.cdr, link, &eta, &c).map_err(|e| e.to_string())?;
        close(&name("aipw_delta"), got, case["aipw_delta"].as_f64().unwrap(), tol, &mut worst)?;
        let (v, se) = final_variance(&o.cdr, link, o.mu1, o.mu0, &eta, &c).map_err(|e| e.to_string())?;
        close(&name("final_variance"), v, case["final_variance"].as_f64().unwrap(), tol, &mut worst)?;
        close(&name("final_se"), se, case["final_se"].as_f64().unwrap(), tol, &mut worst)?;
        checked += 9;
    }
    Ok(format!("{checked} quantities over 3 links, max |diff| {worst:.1e}"))
}

fn exact(what: &str, a: f64, b: f64) -> Result<(), String> {
    if a == b {
        Ok(())
    } else {
        Err(format!("{what}: {a:.17} != {b:.17}"))
    }
}

/// Special cases of the general estimator reproduce the specific formulas exactly.
pub fn reduction_identities() -> Check {
    let o = Oracle::load();
    let model = o.model();
    let e = |e: adaptrial::Error| e.to_string();
    for link in [Link::Identity, Link::Logit, Link::Log] {
        // AIPW with constant propensities is the augmented estimator.
        let (pi1, pi2) = (o.cir.stage(0).mechanism.propensity(&[]), o.cir.stage(1).mechanism.propensity(&[]));
        let (b1, b2) = optimal_augmentation_cir(link, o.mu1, o.mu0, &model, pi1, pi2, o.theta).map_err(e)?;
        let aug = augmented_delta(&o.cir, link, o.theta, &|w| b1.eval(w), &|w| b2.eval(w)).map_err(e)?;
        let weights = [o.theta, 1.0 - o.theta];
        let augs = optimal_augmentation_cdr(link, o.mu1, o.mu0, &model, o.cir.realized_mechanisms(), &weights).map_err(e)?;
        let fns = closures(&augs);
        let aipw = aipw_delta(&o.cir, link, &weights, &refs(&fns)).map_err(e)?;
        exact(&format!("{link:?} aipw(constant p) vs augmented"), aipw, aug)?;

        // Zero augmentation is the weighted plug-in.
        let zero = |_: &[f64]| 0.0;
        for t in [&o.cir, &o.cdr] {
            let mu1: Vec<f64> = t.stages().map(|v| stage_mean_ipw(v.records, v.mechanism, Arm::Treatment).unwrap()).collect();
            let mu0: Vec<f64> = t.stages().map(|v| stage_mean_ipw(v.records, v.mechanism, Arm::Control).unwrap()).collect();
            let plug = weighted_delta(link, &weights, &mu1, &mu0).map_err(e)?;
            let z = aipw_delta(t, link, &weights, &[&zero, &zero]).map_err(e)?;
            exact(&format!("{link:?} zero augmentation vs plug-in"), z, plug)?;
        }

        // The k-stage estimator on two CIR stages is the two-stage formula.
        let r = estimate_full(&o.cir, link, EstimatorKind::Optimized, Nuisance::Provided(&model), 0.95).map_err(e)?;
        let (m1, m0) = r.mu_hat;
        let theta = r.weights[0];
        let (b1, b2) = optimal_augmentation_cir(link, m1, m0, &model, pi1, pi2, theta).map_err(e)?;
        let two = augmented_delta(&o.cir, link, theta, &|w| b1.eval(w), &|w| b2.eval(w)).map_err(e)?;
        exact(&format!("{link:?} k-stage vs two-stage estimate"), r.delta_hat, two)?;
        let (c1, c2) = (|w: &[f64]| b1.eval(w), |w: &[f64]| b2.eval(w));
        let (_, se) = final_variance(&o.cir, link, m1, m0, &r.weights, &[&c1, &c2]).map_err(e)?;
        exact(&format!("{link:?} k-stage vs two-stage SE"), r.se, se)?;
        let col = augmentation_column(o.cir.stage(0).records, o.cir.stage(0).mechanism, &c1);
        let cir_col = adaptrial::estimators::augmentation_column_cir(o.cir.stage(0).records, pi1, &c1);
        exact(&format!("{link:?} augmentation column"), col, cir_col)?;
    }
    Ok("aipw(constant p) = augmented, zero augmentation = plug-in, k=2 = two-stage; 3 links, exact".into())
}

fn run(cases: u32, name: &str, f: impl Fn(&mut TestRunner) -> Result<(), String>) -> Result<(), String> {
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    f(&mut runner).map_err(|e| format!("{name}: {e}"))
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), TestCaseError> {
    if ok {
        Ok(())
    } else {
        Err(TestCaseError::fail(msg()))
    }
}

/// Invariances of the optimal allocation formulas on `cases` random inputs each.
pub fn allocation_properties(cases: u32) -> Check {
    let means = (0.02f64..0.98, 0.02f64..0.98);
    let vars = (1e-4f64..0.3, 1e-4f64..0.3);
    let links = prop_oneof![Just(Link::Identity), Just(Link::Log), Just(Link::Logit)];

    run(cases, "scale invariance", |r| {
        r.run(&(0.0f64..10.0, 1e-3f64..10.0, 1e-3f64..1e3), |(t1, t0, c)| {
            let a = allocation_from_terms(t1, t0, 0.0).unwrap();
            let b = allocation_from_terms(c * t1, c * t0, 0.0).unwrap();
            ensure((a - b).abs() <= 1e-12, || format!("{a} vs {b} at scale {c}"))
        })
        .map_err(|e| e.to_string())?;
        // Identity link: scaling both conditional variances leaves pi and p(x) unchanged.
        r.run(&(means.clone(), vars.clone(), 1e-2f64..1e2), |((m1, m0), (v1, v0), c)| {
            let p = |s: f64| {
                optimal_pi(&AllocationInputs { link: Link::Identity, mu1: m1, mu0: m0, ev1: s * v1, ev0: s * v0 }, 0.0)
                    .unwrap()
            };
            let q = |s: f64| {
                optimal_propensity(Link::Identity, m1, m0, |_: &[f64]| s * v1, |_: &[f64]| s * v0, &[0.0], 0.0).unwrap()
            };
            ensure((p(1.0) - p(c)).abs() <= 1e-12 && (q(1.0) - q(c)).abs() <= 1e-12, || "not scale invariant".into())
        })
        .map_err(|e| e.to_string())
    })?;

    run(cases, "symmetry", |r| {
        r.run(&(0.0f64..10.0, 1e-3f64..10.0, 0.0f64..0.49), |(t1, t0, eps)| {
            let a = allocation_from_terms(t1, t0, eps).unwrap();
            let b = allocation_from_terms(t0, t1, eps).unwrap();
            let same = allocation_from_terms(t0, t0, eps).unwrap();
            ensure((a + b - 1.0).abs() <= 1e-12 && (same - 0.5).abs() <= 1e-15, || format!("{a} + {b} != 1"))
        })
        .map_err(|e| e.to_string())?;
        // Logit: mu1 = 1 - mu0 with equal variance terms gives 1:1.
        r.run(&(0.02f64..0.98, 1e-4f64..0.3), |(m, v)| {
            let p = optimal_pi(&AllocationInputs { link: Link::Logit, mu1: m, mu0: 1.0 - m, ev1: v, ev0: v }, 0.05).unwrap();
            ensure((p - 0.5).abs() <= 1e-12, || format!("p = {p}"))
        })
        .map_err(|e| e.to_string())
    })?;

    run(cases, "monotonicity", |r| {
        r.run(&(links.clone(), means.clone(), vars.clone(), 1.0f64..4.0, 0.0f64..0.2), |(link, (m1, m0), (v1, v0), k, eps)| {
            let pi = |a: f64, b: f64| {
                optimal_pi(&AllocationInputs { link, mu1: m1, mu0: m0, ev1: a, ev0: b }, eps).unwrap()
            };
            let base = pi(v1, v0);
            let pointwise =
                optimal_propensity(link, m1, m0, |_: &[f64]| v1, |_: &[f64]| v0, &[1.0, -1.0], eps).unwrap();
            ensure(pi(k * v1, v0) >= base - 1e-15, || "not increasing in E v1".into())?;
            ensure(pi(v1, k * v0) <= base + 1e-15, || "not decreasing in E v0".into())?;
            ensure(base >= eps - 1e-15 && base <= 1.0 - eps + 1e-15, || format!("{base} outside clamp"))?;
            ensure(pointwise == base, || "pointwise and marginal formulas disagree".into())
        })
        .map_err(|e| e.to_string())
    })?;
    Ok(format!("scale invariance, symmetry, monotonicity: {cases} random inputs per property"))
}

/// Converged IRLS fits meet the score tolerance; saturated fits recover cell log-odds.
pub fn irls_properties(cases: u32) -> Check {
    let opts = LogisticOptions::default();
    let problems = (1usize..5, proptest::collection::vec((-2.0f64..2.0, 0.0f64..1.0), 40..200), -1.0f64..1.0);
    let mut runner = TestRunner::new(Config { cases, failure_persistence: None, ..Config::default() });
    let counter = std::cell::Cell::new((0usize, 0.0f64));
    runner
        .run(&problems, |(p, draws, slope)| {
            let mut x = DesignMatrix::new(p);
            let mut y = Vec::new();
            for (i, (u, v)) in draws.iter().enumerate() {
                let mut row = vec![1.0];
                for j in 1..p {
                    row.push(((i * 7 + j * 13) % 17) as f64 / 8.0 - 1.0 + u * j as f64 / 4.0);
                }
                x.push_row(&row).unwrap();
                y.push(if *v < expit(-0.3 + slope * u) { 1.0 } else { 0.0 });
            }
            let fit = fit_logistic_irls(&x, &y, &opts).map_err(|e| TestCaseError::fail(e.to_string()))?;
            if fit.converged {
                let (n, s) = counter.get();
                counter.set((n + 1, s.max(fit.max_abs_score)));
                ensure(fit.max_abs_score <= 1e-8, || format!("score {:e}", fit.max_abs_score))?;
            }
            Ok(())
        })
        .map_err(|e| format!("score tolerance: {e}"))?;
    let (converged, worst_score) = counter.get();

    // Saturated cell model: the coefficients are the cell log-odds (and differences).
    let cells = [(3usize, 10usize), (7, 10), (12, 40), (1, 9)];
    let mut x = DesignMatrix::new(cells.len());
    let mut y = Vec::new();
    for (c, &(succ, n)) in cells.iter().enumerate() {
        for i in 0..n {
            let mut row = vec![1.0];
            row.extend((1..cells.len()).map(|j| if j == c { 1.0 } else { 0.0 }));
            x.push_row(&row).unwrap();
            y.push(if i < succ { 1.0 } else { 0.0 });
        }
    }
    let fit = fit_logistic_irls(&x, &y, &opts).map_err(|e| e.to_string())?;
    let logodds = |(s, n): (usize, usize)| (s as f64 / (n - s) as f64).ln();
    let base = logodds(cells[0]);
    let mut worst = (fit.coefficients[0] - base).abs();
    for (j, &cell) in cells.iter().enumerate().skip(1) {
        worst = worst.max((fit.coefficients[j] - (logodds(cell) - base)).abs());
    }
    if !fit.converged || worst > 1e-8 {
        return Err(format!("saturated fit off by {worst:e} (converged: {})", fit.converged));
    }
    Ok(format!(
        "{converged}/{cases} random fits converged, max score {worst_score:.1e}; saturated log-odds error {worst:.1e}"
    ))
}
