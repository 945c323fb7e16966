//! Treatment assignment draws and the optimal-allocation formulas.
//!
//! Both the covariate-independent optimum
//! `pi = g'(mu1) sqrt(E v1) / (g'(mu1) sqrt(E v1) + g'(mu0) sqrt(E v0))`
//! and its pointwise covariate-dependent counterpart reduce to the same ratio
//! of two nonnegative terms, computed by [`allocation_from_terms`].

use rand::Rng;

use crate::error::{Error, Result};
use crate::link::Link;
use crate::types::{Arm, AssignmentMechanism, Resolved};

/// Inputs to the covariate-independent optimum. `ev1`/`ev0` are the
/// marginal expectations of the conditional variances (or pointwise values).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationInputs {
    pub link: Link,
    pub mu1: f64,
    pub mu0: f64,
    pub ev1: f64,
    pub ev0: f64,
}

/// `t1 / (t1 + t0)` clamped to `[clamp, 1 - clamp]`.
pub fn allocation_from_terms(t1: f64, t0: f64, clamp: f64) -> Result<f64> {
    if !(t1 >= 0.0 && t0 >= 0.0) {
        return Err(Error::InvalidArgument(format!("allocation terms must be nonnegative, got {t1} and {t0}")));
    }
    let total = t1 + t0;
    if total <= 0.0 {
        return Err(Error::DegenerateVariance);
    }
    Ok((t1 / total).clamp(clamp, 1.0 - clamp))
}

fn check_variances(v1: f64, v0: f64) -> Result<()> {
    if !(v1 >= 0.0 && v0 >= 0.0) {
        return Err(Error::InvalidArgument(format!("conditional variances must be nonnegative, got {v1} and {v0}")));
    }
    if v1 == 0.0 && v0 == 0.0 {
        return Err(Error::DegenerateVariance);
    }
    Ok(())
}

/// Optimal covariate-independent allocation probability, clamped.
pub fn optimal_pi(inputs: &AllocationInputs, clamp: f64) -> Result<f64> {
    check_variances(inputs.ev1, inputs.ev0)?;
    let g1 = inputs.link.deriv(inputs.mu1)?;
    let g0 = inputs.link.deriv(inputs.mu0)?;
    allocation_from_terms(g1 * inputs.ev1.sqrt(), g0 * inputs.ev0.sqrt(), clamp)
}

/// Optimal propensity score at covariate value `w`, clamped.
#[allow(clippy::too_many_arguments)]
pub fn optimal_propensity<F1, F0>(
    link: Link,
    mu1: f64,
    mu0: f64,
    v1: F1,
    v0: F0,
    w: &[f64],
    clamp: f64,
) -> Result<f64>
where
    F1: Fn(&[f64]) -> f64,
    F0: Fn(&[f64]) -> f64,
{
    let (a, b) = (v1(w), v0(w));
    check_variances(a, b)?;
    allocation_from_terms(link.deriv(mu1)? * a.sqrt(), link.deriv(mu0)? * b.sqrt(), clamp)
}

/// Bernoulli(`p`) draw shared by both assignment routes: one uniform per call.
fn bernoulli<R: Rng + ?Sized>(p: f64, rng: &mut R) -> Arm {
    if rng.random::<f64>() < p {
        Arm::Treatment
    } else {
        Arm::Control
    }
}

/// Simple randomization with `P(A = 1) = pi`.
pub fn assign_cir<R: Rng + ?Sized>(pi: f64, rng: &mut R) -> Result<Arm> {
    if !(pi > 0.0 && pi < 1.0) {
        return Err(Error::InvalidArgument(format!("assignment probability must lie in (0, 1), got {pi}")));
    }
    Ok(bernoulli(pi, rng))
}

/// Covariate-dependent draw with `P(A = 1 | W = w) = p(w)`. Returns the arm
/// and the resolved propensity (which flags an unseen table cell).
pub fn assign_cdr<R: Rng + ?Sized>(mech: &AssignmentMechanism, w: &[f64], rng: &mut R) -> (Arm, Resolved) {
    let resolved = mech.resolve(w);
    (bernoulli(resolved.p, rng), resolved)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::link::expit;
    use crate::types::{CovariateSelector, SelectedCoord};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn direct_formula(link: Link, mu1: f64, mu0: f64, v1: f64, v0: f64) -> f64 {
        let a = link.deriv(mu1).unwrap() * v1.sqrt();
        let b = link.deriv(mu0).unwrap() * v0.sqrt();
        a / (a + b)
    }

    #[test]
    fn symmetric_and_ratio_cases() {
        let inp = AllocationInputs { link: Link::Identity, mu1: 3.0, mu0: -1.0, ev1: 0.7, ev0: 0.7 };
        assert_eq!(optimal_pi(&inp, 0.05).unwrap(), 0.5);
        let inp = AllocationInputs { ev1: 4.0, ev0: 1.0, ..inp };
        assert!((optimal_pi(&inp, 0.05).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let inp = AllocationInputs { link: Link::Logit, mu1: 0.5, mu0: 0.2, ev1: 0.25, ev0: 0.16 };
        let oracle = (4.0 * 0.5) / (4.0 * 0.5 + (1.0 / 0.16) * 0.4);
        assert!((optimal_pi(&inp, 0.05).unwrap() - oracle).abs() < 1e-12);
        assert!((optimal_pi(&inp, 0.05).unwrap() - direct_formula(Link::Logit, 0.5, 0.2, 0.25, 0.16)).abs() < 1e-12);
    }

    #[test]
    fn degenerate_variance_is_an_error() {
        let inp = AllocationInputs { link: Link::Identity, mu1: 0.0, mu0: 0.0, ev1: 0.0, ev0: 0.0 };
        assert_eq!(optimal_pi(&inp, 0.05), Err(Error::DegenerateVariance));
        let r = optimal_propensity(Link::Identity, 0.0, 0.0, |_| 0.0, |_| 0.0, &[1.0], 0.05);
        assert_eq!(r, Err(Error::DegenerateVariance));
    }

    #[test]
    fn propensity_cases() {
        let p = optimal_propensity(Link::Identity, 0.0, 0.0, |w| w[0] * w[0], |w| w[0] * w[0], &[2.0], 0.05);
        assert_eq!(p.unwrap(), 0.5);
        let p = optimal_propensity(Link::Identity, 0.0, 0.0, |_| 9.0, |_| 1.0, &[0.3], 0.05).unwrap();
        assert!((p - 0.75).abs() < 1e-15);

        // Binary outcomes under a known logistic model.
        let (mu1, mu0) = (0.3, 0.12);
        let m1 = |w: &[f64]| expit(-1.0 + 0.8 * w[0]);
        let m0 = |w: &[f64]| expit(-2.0 - 0.5 * w[0]);
        for w in [-1.5, -0.2, 0.0, 0.9, 2.2] {
            let v1 = |x: &[f64]| m1(x) * (1.0 - m1(x));
            let v0 = |x: &[f64]| m0(x) * (1.0 - m0(x));
            let got = optimal_propensity(Link::Logit, mu1, mu0, v1, v0, &[w], 0.0).unwrap();
            let want = direct_formula(Link::Logit, mu1, mu0, v1(&[w]), v0(&[w]));
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn clamping() {
        let p = optimal_propensity(Link::Identity, 0.0, 0.0, |_| 1.0, |_| 1e-12, &[0.0], 0.05).unwrap();
        assert_eq!(p, 0.95);
        let p = optimal_propensity(Link::Identity, 0.0, 0.0, |_| 0.0, |_| 1.0, &[0.0], 0.05).unwrap();
        assert_eq!(p, 0.05);
    }

    #[test]
    fn cir_draw_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let hits = (0..n).filter(|_| assign_cir(0.5, &mut rng).unwrap().is_treatment()).count();
        // Binomial sd at n = 1e5 is 0.0016, so 0.01 is > 6 sd.
        assert!((hits as f64 / n as f64 - 0.5).abs() < 0.01);

        let hits = (0..n).filter(|_| assign_cir(0.95, &mut rng).unwrap().is_treatment()).count();
        assert!((hits as f64 / n as f64 - 0.95).abs() < 0.005);
        assert!(assign_cir(0.0, &mut rng).is_err());
        assert!(assign_cir(1.2, &mut rng).is_err());
    }

    #[test]
    fn cir_is_reproducible() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..64).map(|_| assign_cir(0.5, &mut rng).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
        assert_ne!(draw(5), draw(6));
    }

    #[test]
    fn cdr_table_frequencies() {
        let sel = CovariateSelector::new(vec![SelectedCoord { index: 0, threshold: Some(0.0) }], 1).unwrap();
        let mech = AssignmentMechanism::Table { selector: sel, cells: BTreeMap::from([(0, 0.25), (1, 0.75)]) };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        let hits = (0..n).filter(|_| assign_cdr(&mech, &[1.0], &mut rng).0.is_treatment()).count();
        assert!((hits as f64 / n as f64 - 0.75).abs() < 0.01);
    }

    #[test]
    fn null_logistic_model() {
        let mech = AssignmentMechanism::Logistic {
            selector: CovariateSelector::all(3),
            coefficients: vec![0.0; 4],
        };
        for w in [[0.0, 0.0, 0.0], [1.0, -3.0, 2.0]] {
            assert_eq!(mech.propensity(&w), 0.5);
        }
    }

    #[test]
    fn cdr_generalizes_cir_draw_for_draw() {
        let sel = CovariateSelector::new(vec![SelectedCoord { index: 0, threshold: Some(0.0) }], 1).unwrap();
        for pi in [0.1, 0.5, 0.83] {
            let table = AssignmentMechanism::Table { selector: sel.clone(), cells: BTreeMap::from([(0, pi), (1, pi)]) };
            let mut a = ChaCha8Rng::seed_from_u64(99);
            let mut b = ChaCha8Rng::seed_from_u64(99);
            for i in 0..2000 {
                let w = [(i as f64).sin()];
                assert_eq!(assign_cir(pi, &mut a).unwrap(), assign_cdr(&table, &w, &mut b).0);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn scale_invariance(mu1 in 0.01f64..0.99, mu0 in 0.01f64..0.99, v1 in 1e-4f64..1.0, v0 in 1e-4f64..1.0, c in 1e-3f64..1e3) {
            for link in [Link::Identity, Link::Log, Link::Logit] {
                let base = AllocationInputs { link, mu1, mu0, ev1: v1, ev0: v0 };
                let scaled = AllocationInputs { ev1: v1 * c, ev0: v0 * c, ..base };
                let p = optimal_pi(&base, 0.0).unwrap();
                let q = optimal_pi(&scaled, 0.0).unwrap();
                prop_assert!((p - q).abs() < 1e-12);
                let pp = optimal_propensity(link, mu1, mu0, |_| v1, |_| v0, &[0.0], 0.0).unwrap();
                let qq = optimal_propensity(link, mu1, mu0, |_| v1 * c, |_| v0 * c, &[0.0], 0.0).unwrap();
                prop_assert!((pp - qq).abs() < 1e-12);
                prop_assert!((p - pp).abs() < 1e-12);
            }
        }

        #[test]
        fn monotone_in_treated_variance(mu1 in 0.01f64..0.99, mu0 in 0.01f64..0.99, v1 in 0.0f64..1.0, dv in 0.0f64..1.0, v0 in 1e-4f64..1.0, clamp in 0.0f64..0.2) {
            let lo = optimal_propensity(Link::Logit, mu1, mu0, |_| v1, |_| v0, &[], clamp).unwrap();
            let hi = optimal_propensity(Link::Logit, mu1, mu0, |_| v1 + dv, |_| v0, &[], clamp).unwrap();
            prop_assert!(hi >= lo);
        }

        #[test]
        fn outputs_within_clamp(mu1 in 0.001f64..0.999, mu0 in 0.001f64..0.999, v1 in 0.0f64..1.0, v0 in 1e-9f64..1.0, clamp in 0.001f64..0.49) {
            let p = optimal_pi(&AllocationInputs { link: Link::Logit, mu1, mu0, ev1: v1, ev0: v0 }, clamp).unwrap();
            prop_assert!(p >= clamp && p <= 1.0 - clamp);
        }

        #[test]
        fn symmetry_gives_half(mu in 0.01f64..0.99, v in 1e-6f64..1.0) {
            let p = optimal_pi(&AllocationInputs { link: Link::Logit, mu1: mu, mu0: mu, ev1: v, ev0: v }, 0.0).unwrap();
            prop_assert!((p - 0.5).abs() < 1e-15);
        }
    }
}
