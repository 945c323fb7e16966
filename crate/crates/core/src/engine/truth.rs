//! True marginal means, treatment effect and optimal allocations of a
//! population.
//!
//! The outcome model is logistic in a linear predictor of normal covariates,
//! so given any sub-vector `X` of `W` the predictor is univariate normal.
//! Means and conditional variances given `X` then reduce to nested
//! one-dimensional Gauss-Hermite integrals. Thresholded selectors fall back
//! to Monte Carlo over the covariate distribution.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::link::{expit, Link};
use crate::types::{Arm, CovariateSelector, PopulationSpec};

use super::dgp::{draw_covariates, substream};
use super::quadrature::GaussHermite;

/// Accuracy knobs of [`true_marginals`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthBudget {
    pub nodes: usize,
    pub mc_draws: usize,
    pub seed: u64,
}

impl Default for TruthBudget {
    fn default() -> Self {
        Self { nodes: 64, mc_draws: 2_000_000, seed: 0x7275_7468 }
    }
}

/// Law of the linear predictor of one arm given the selected coordinates:
/// `eta | X = x ~ N(alpha + k'(x - mean_S), s^2)`.
#[derive(Debug, Clone, PartialEq)]
struct ArmReduction {
    alpha: f64,
    k: Vec<f64>,
    /// Standard deviation of `k'(X - mean_S)`.
    tau: f64,
    /// Conditional standard deviation given `X`.
    s: f64,
}

impl ArmReduction {
    fn new(pop: &PopulationSpec, arm: Arm, indices: &[usize]) -> Result<Self> {
        let d = pop.dim();
        let a = arm.indicator();
        let b: Vec<f64> = (0..d).map(|j| pop.gamma2[j] + a * pop.gamma3[j]).collect();
        let cov = pop.covariance();
        let alpha = pop.gamma0 + pop.gamma1 * a + (0..d).map(|j| b[j] * pop.mean()[j]).sum::<f64>();
        let total: f64 = (0..d).map(|i| (0..d).map(|j| b[i] * cov[i][j] * b[j]).sum::<f64>()).sum();
        if indices.is_empty() {
            return Ok(Self { alpha, k: Vec::new(), tau: 0.0, s: total.max(0.0).sqrt() });
        }
        let m = indices.len();
        let sigma_ss = DMatrix::from_fn(m, m, |i, j| cov[indices[i]][indices[j]]);
        let c = DVector::from_fn(m, |i, _| (0..d).map(|j| cov[indices[i]][j] * b[j]).sum::<f64>());
        let pinv = sigma_ss.pseudo_inverse(1e-12).map_err(|e| Error::Estimation(e.to_string()))?;
        let k = &pinv * &c;
        let tau2 = c.dot(&k).max(0.0);
        Ok(Self { alpha, k: k.iter().copied().collect(), tau: tau2.sqrt(), s: (total - tau2).max(0.0).sqrt() })
    }

    fn marginal_sd(&self) -> f64 {
        self.tau.hypot(self.s)
    }

    /// `E{expit(eta) | X}` as a function of `u = k'(x - mean_S)`.
    fn conditional_mean(&self, u: f64, gh: &GaussHermite) -> f64 {
        gh.expect(self.alpha + u, self.s, expit)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum AllocationTruth {
    Continuous { indices: Vec<usize>, mean_s: Vec<f64>, arms: [ArmReduction; 2], gh: GaussHermite },
    /// Cell -> (probability, m1, m0).
    Cells(BTreeMap<u32, (f64, f64, f64)>),
}

/// Population quantities used as ground truth by the Monte Carlo engine.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueValues {
    pub link: Link,
    pub selector: CovariateSelector,
    pub mu1: f64,
    pub mu0: f64,
    pub delta: f64,
    /// `E v_a(X)` with `v_a(X) = Var{Y(a) | X}`.
    pub ev1: f64,
    pub ev0: f64,
    /// Optimal covariate-independent allocation for `X`, unclamped.
    pub pi_opt: f64,
    allocation: AllocationTruth,
}

impl TrueValues {
    /// `(m_1(x), m_0(x))` for the selected part of `w`.
    pub fn conditional_means(&self, w: &[f64]) -> (f64, f64) {
        match &self.allocation {
            AllocationTruth::Continuous { indices, mean_s, arms, gh } => {
                let u = |arm: &ArmReduction| {
                    indices.iter().zip(mean_s).zip(&arm.k).map(|((&i, m), k)| k * (w[i] - m)).sum::<f64>()
                };
                (arms[1].conditional_mean(u(&arms[1]), gh), arms[0].conditional_mean(u(&arms[0]), gh))
            }
            AllocationTruth::Cells(cells) => {
                let (_, m1, m0) = cells.get(&self.selector.cell(w)).copied().unwrap_or((0.0, self.mu1, self.mu0));
                (m1, m0)
            }
        }
    }

    /// True optimal propensity `p_opt(x)` at the selected part of `w`, unclamped.
    pub fn p_opt(&self, w: &[f64]) -> Result<f64> {
        let (m1, m0) = self.conditional_means(w);
        let t1 = self.link.deriv(self.mu1)? * (m1 * (1.0 - m1)).sqrt();
        let t0 = self.link.deriv(self.mu0)? * (m0 * (1.0 - m0)).sqrt();
        Ok(t1 / (t1 + t0))
    }

    /// `p_opt` on the cells of a discrete selector, or on the grid
    /// `mean +- 1 sd` (and the mean) of each selected coordinate.
    pub fn p_opt_table(&self, pop: &PopulationSpec) -> Result<Vec<(String, f64)>> {
        let mut out = Vec::new();
        match &self.allocation {
            AllocationTruth::Cells(cells) => {
                for &cell in cells.keys() {
                    let w = cell_representative(&self.selector, pop, cell);
                    out.push((format!("{}={cell:0width$b}", self.selector, width = self.selector.dim()), self.p_opt(&w)?));
                }
            }
            AllocationTruth::Continuous { indices, .. } => {
                let levels = [-1.0, 0.0, 1.0];
                let total = levels.len().pow(indices.len() as u32);
                for mut code in 0..total {
                    let mut w = pop.mean().to_vec();
                    let mut label = Vec::new();
                    for &i in indices {
                        let z = levels[code % levels.len()];
                        code /= levels.len();
                        w[i] += z * pop.covariance()[i][i].sqrt();
                        label.push(format!("W{}={:.3}", i + 1, w[i]));
                    }
                    out.push((label.join(","), self.p_opt(&w)?));
                }
            }
        }
        Ok(out)
    }
}

fn cell_representative(selector: &CovariateSelector, pop: &PopulationSpec, cell: u32) -> Vec<f64> {
    let mut w = pop.mean().to_vec();
    for (bit, c) in selector.coords().iter().enumerate() {
        let t = c.threshold.unwrap_or(0.0);
        w[c.index] = if cell >> bit & 1 == 1 { t.abs() + 1.0 } else { t - t.abs() - 1.0 };
    }
    w
}

fn pi_from(link: Link, mu1: f64, mu0: f64, ev1: f64, ev0: f64) -> Result<f64> {
    let t1 = link.deriv(mu1)? * ev1.sqrt();
    let t0 = link.deriv(mu0)? * ev0.sqrt();
    Ok(t1 / (t1 + t0))
}

/// Ground truth for `pop` with allocation quantities taken with respect to
/// `selector`.
pub fn true_marginals(
    pop: &PopulationSpec,
    link: Link,
    selector: &CovariateSelector,
    budget: &TruthBudget,
) -> Result<TrueValues> {
    if selector.full_dim() != pop.dim() {
        return Err(Error::DimensionMismatch { expected: pop.dim(), found: selector.full_dim() });
    }
    let gh = GaussHermite::new(budget.nodes);
    let indices: Vec<usize> = selector.coords().iter().map(|c| c.index).collect();
    let arms = [ArmReduction::new(pop, Arm::Control, &indices)?, ArmReduction::new(pop, Arm::Treatment, &indices)?];
    let mu0 = gh.expect(arms[0].alpha, arms[0].marginal_sd(), expit);
    let mu1 = gh.expect(arms[1].alpha, arms[1].marginal_sd(), expit);
    let delta = link.value(mu1)? - link.value(mu0)?;

    if selector.is_discrete() && selector.dim() > 0 {
        let cells = cell_means(pop, selector, budget.mc_draws, budget.seed);
        let ev = |pick: fn(&(f64, f64, f64)) -> f64| cells.values().map(|c| c.0 * pick(c) * (1.0 - pick(c))).sum::<f64>();
        let (ev1, ev0) = (ev(|c| c.1), ev(|c| c.2));
        return Ok(TrueValues {
            link,
            selector: selector.clone(),
            mu1,
            mu0,
            delta,
            ev1,
            ev0,
            pi_opt: pi_from(link, mu1, mu0, ev1, ev0)?,
            allocation: AllocationTruth::Cells(cells),
        });
    }

    let ev = |arm: &ArmReduction| {
        gh.expect(0.0, arm.tau, |u| {
            let m = arm.conditional_mean(u, &gh);
            m * (1.0 - m)
        })
    };
    let (ev1, ev0) = (ev(&arms[1]), ev(&arms[0]));
    let mean_s = indices.iter().map(|&i| pop.mean()[i]).collect();
    Ok(TrueValues {
        link,
        selector: selector.clone(),
        mu1,
        mu0,
        delta,
        ev1,
        ev0,
        pi_opt: pi_from(link, mu1, mu0, ev1, ev0)?,
        allocation: AllocationTruth::Continuous { indices, mean_s, arms, gh },
    })
}

/// Monte Carlo cell probabilities and conditional means `E{m_a(W) | cell}`.
fn cell_means(pop: &PopulationSpec, selector: &CovariateSelector, draws: usize, seed: u64) -> BTreeMap<u32, (f64, f64, f64)> {
    let mut rng = substream(seed, u64::MAX, 0);
    let mut acc: BTreeMap<u32, (f64, f64, f64)> = BTreeMap::new();
    for _ in 0..draws {
        let w = draw_covariates(pop, &mut rng);
        let e = acc.entry(selector.cell(&w)).or_insert((0.0, 0.0, 0.0));
        e.0 += 1.0;
        e.1 += pop.outcome_mean(Arm::Treatment, &w);
        e.2 += pop.outcome_mean(Arm::Control, &w);
    }
    acc.into_iter()
        .map(|(cell, (n, s1, s0))| (cell, (n / draws as f64, s1 / n, s0 / n)))
        .collect()
}

/// `(mu1, mu0)` by product Gauss-Hermite quadrature over all of `W`.
pub fn product_quadrature_means(pop: &PopulationSpec, nodes: usize) -> (f64, f64) {
    let gh = GaussHermite::new(nodes);
    let d = pop.dim();
    let factor = pop.factor();
    let (mut mu1, mut mu0) = (0.0, 0.0);
    let total = nodes.pow(d as u32);
    let mut z = vec![0.0; d];
    let mut w = vec![0.0; d];
    for mut code in 0..total {
        let mut weight = 1.0;
        for zj in z.iter_mut() {
            let i = code % nodes;
            code /= nodes;
            *zj = gh.nodes[i];
            weight *= gh.weights[i];
        }
        for i in 0..d {
            w[i] = pop.mean()[i] + (0..=i).map(|j| factor[i][j] * z[j]).sum::<f64>();
        }
        mu1 += weight * pop.outcome_mean(Arm::Treatment, &w);
        mu0 += weight * pop.outcome_mean(Arm::Control, &w);
    }
    (mu1, mu0)
}

/// `(mu1, mu0)` as the average of simulated potential outcomes.
pub fn monte_carlo_means(pop: &PopulationSpec, draws: usize, seed: u64) -> (f64, f64) {
    let mut rng = substream(seed, 0, 0);
    let (mut s1, mut s0) = (0.0, 0.0);
    for _ in 0..draws {
        let p = super::dgp::draw_patient(pop, &mut rng);
        s1 += p.y1;
        s0 += p.y0;
    }
    (s1 / draws as f64, s0 / draws as f64)
}
