//! Logistic regression by iteratively reweighted least squares.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::link::expit;
use crate::types::Arm;

/// Stopping rules and safeguards for [`fit_logistic_irls`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticOptions {
    /// Converged once the score's infinity norm is at or below this.
    pub score_tol: f64,
    pub max_iter: usize,
    /// Separation guard: stop as soon as any |coefficient| exceeds this.
    pub coef_limit: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self { score_tol: 1e-8, max_iter: 50, coef_limit: 15.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub coefficients: Vec<f64>,
    pub converged: bool,
    /// Newton steps taken.
    pub iterations: usize,
    /// Infinity norm of `X'(y - p)` at the returned coefficients.
    pub max_abs_score: f64,
    /// The separation guard fired.
    pub separated: bool,
    /// Columns dropped as linearly dependent on earlier ones; their
    /// coefficients are zero.
    pub dropped: Vec<usize>,
}

impl LogisticFit {
    pub fn linear_predictor(&self, row: &[f64]) -> f64 {
        row.iter().zip(&self.coefficients).map(|(x, b)| x * b).sum()
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        expit(self.linear_predictor(row))
    }
}

/// Dense row-major design matrix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DesignMatrix {
    cols: usize,
    data: Vec<f64>,
}

impl DesignMatrix {
    pub fn new(cols: usize) -> Self {
        Self { cols, data: Vec::new() }
    }

    pub fn with_capacity(cols: usize, rows: usize) -> Self {
        Self { cols, data: Vec::with_capacity(cols * rows) }
    }

    pub fn push_row(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.cols {
            return Err(Error::DimensionMismatch { expected: self.cols, found: row.len() });
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut m = Self::with_capacity(cols, rows.len());
        for r in rows {
            m.push_row(r)?;
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.data.len().checked_div(self.cols).unwrap_or(0)
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Column layout `[1, A, X, A X]` of the working and outcome models.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InteractionLayout {
    pub covariates: usize,
}

impl InteractionLayout {
    pub fn new(covariates: usize) -> Self {
        Self { covariates }
    }

    pub fn width(&self) -> usize {
        2 + 2 * self.covariates
    }

    pub fn row_into(&self, arm: Arm, x: &[f64], out: &mut Vec<f64>) -> Result<()> {
        if x.len() != self.covariates {
            return Err(Error::DimensionMismatch { expected: self.covariates, found: x.len() });
        }
        let a = arm.indicator();
        out.clear();
        out.push(1.0);
        out.push(a);
        out.extend_from_slice(x);
        out.extend(x.iter().map(|v| a * v));
        Ok(())
    }
}

/// `[1, a, x..., a*x...]`.
pub fn build_design_row(arm: Arm, x: &[f64], layout: InteractionLayout) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(layout.width());
    layout.row_into(arm, x, &mut out)?;
    Ok(out)
}

/// Fitted `P(Y = 1 | A = arm, X = x)`.
pub fn predict_mean_binary(fit: &LogisticFit, layout: InteractionLayout, arm: Arm, x: &[f64]) -> Result<f64> {
    if fit.coefficients.len() != layout.width() {
        return Err(Error::DimensionMismatch { expected: layout.width(), found: fit.coefficients.len() });
    }
    Ok(fit.predict(&build_design_row(arm, x, layout)?))
}

fn log1pexp(eta: f64) -> f64 {
    if eta > 0.0 {
        eta + (-eta).exp().ln_1p()
    } else {
        eta.exp().ln_1p()
    }
}

fn log_likelihood(x: &DesignMatrix, y: &[f64], beta: &[f64]) -> f64 {
    (0..x.rows())
        .map(|i| {
            let eta: f64 = x.row(i).iter().zip(beta).map(|(a, b)| a * b).sum();
            y[i] * eta - log1pexp(eta)
        })
        .sum()
}

/// Score `X'(y - p)` over the given columns.
fn score(x: &DesignMatrix, y: &[f64], beta: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.cols()];
    for i in 0..x.rows() {
        let row = x.row(i);
        let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
        let r = y[i] - expit(eta);
        for (gj, xj) in g.iter_mut().zip(row) {
            *gj += xj * r;
        }
    }
    g
}

/// Indices of columns that are not (numerically) in the span of earlier ones.
fn independent_columns(x: &DesignMatrix) -> Vec<usize> {
    let n = x.rows();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut keep = Vec::new();
    for j in 0..x.cols() {
        let mut v: Vec<f64> = (0..n).map(|i| x.row(i)[j]).collect();
        let norm0: f64 = v.iter().map(|a| a * a).sum();
        if norm0 == 0.0 {
            continue;
        }
        // Two Gram-Schmidt passes for stability.
        for _ in 0..2 {
            for q in &basis {
                let dot: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= dot * qi;
                }
            }
        }
        let norm: f64 = v.iter().map(|a| a * a).sum();
        if norm > 1e-10 * norm0 {
            let s = norm.sqrt();
            v.iter_mut().for_each(|a| *a /= s);
            basis.push(v);
            keep.push(j);
        }
    }
    keep
}

fn restrict(x: &DesignMatrix, cols: &[usize]) -> DesignMatrix {
    let mut out = DesignMatrix::with_capacity(cols.len(), x.rows());
    for i in 0..x.rows() {
        let row = x.row(i);
        out.data.extend(cols.iter().map(|&j| row[j]));
    }
    out.cols = cols.len();
    out
}

/// Maximum-likelihood logistic regression of binary `y` on the design `x`.
pub fn fit_logistic_irls(x: &DesignMatrix, y: &[f64], opts: &LogisticOptions) -> Result<LogisticFit> {
    fit_logistic_irls_from(x, y, &vec![0.0; x.cols()], opts)
}

/// As [`fit_logistic_irls`], starting Newton's method at `start`.
pub fn fit_logistic_irls_from(
    x: &DesignMatrix,
    y: &[f64],
    start: &[f64],
    opts: &LogisticOptions,
) -> Result<LogisticFit> {
    let n = x.rows();
    let p_full = x.cols();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: y.len() });
    }
    if start.len() != p_full {
        return Err(Error::DimensionMismatch { expected: p_full, found: start.len() });
    }
    if n == 0 {
        return Err(Error::Estimation("logistic fit on an empty design".into()));
    }
    if let Some(v) = y.iter().find(|v| **v != 0.0 && **v != 1.0) {
        return Err(Error::InvalidArgument(format!("logistic response must be 0 or 1, got {v}")));
    }

    let keep = independent_columns(x);
    let dropped: Vec<usize> = (0..p_full).filter(|j| !keep.contains(j)).collect();
    let xr = if dropped.is_empty() { x.clone() } else { restrict(x, &keep) };
    let p = keep.len();

    let mut beta: Vec<f64> = keep.iter().map(|&j| start[j]).collect();
    let mut ll = log_likelihood(&xr, y, &beta);
    let mut iterations = 0;
    let mut converged = false;
    let mut separated = false;

    loop {
        let g = score(&xr, y, &beta);
        if g.iter().all(|v| v.abs() <= opts.score_tol) {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }

        let mut h = DMatrix::<f64>::zeros(p, p);
        for i in 0..n {
            let row = xr.row(i);
            let eta: f64 = row.iter().zip(&beta).map(|(a, b)| a * b).sum();
            let m = expit(eta);
            let wt = m * (1.0 - m);
            if wt == 0.0 {
                continue;
            }
            for a in 0..p {
                let wa = wt * row[a];
                for b in a..p {
                    h[(a, b)] += wa * row[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
        }
        let rhs = DVector::from_column_slice(&g);
        let step = match h.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => match h.lu().solve(&rhs) {
                Some(s) => s,
                None => break,
            },
        };

        // Step-halving keeps the log-likelihood non-decreasing.
        let mut scale = 1.0;
        let mut candidate: Vec<f64>;
        let mut cand_ll;
        let mut halvings = 0;
        loop {
            candidate = beta.iter().zip(step.iter()).map(|(b, s)| b + scale * s).collect();
            cand_ll = log_likelihood(&xr, y, &candidate);
            if cand_ll >= ll - 1e-12 * ll.abs().max(1.0) || halvings >= 30 {
                break;
            }
            scale *= 0.5;
            halvings += 1;
        }
        iterations += 1;
        if cand_ll < ll - 1e-12 * ll.abs().max(1.0) {
            // No ascent direction left at machine precision.
            break;
        }
        beta = candidate;
        ll = cand_ll;
        if beta.iter().any(|b| b.abs() > opts.coef_limit) {
            separated = true;
            break;
        }
    }

    let mut coefficients = vec![0.0; p_full];
    for (k, &j) in keep.iter().enumerate() {
        coefficients[j] = beta[k];
    }
    let max_abs_score = score(x, y, &coefficients).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(LogisticFit {
        coefficients,
        converged: converged && !separated && max_abs_score <= opts.score_tol,
        iterations,
        max_abs_score,
        separated,
        dropped,
    })
}
