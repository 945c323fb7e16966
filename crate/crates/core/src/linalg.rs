//! Small dense helpers that nalgebra does not cover directly.

use crate::error::{Error, Result};

/// Lower-triangular factor `L` with `L L' = cov` for a symmetric positive
/// semi-definite matrix. Zero pivots are allowed; the corresponding column of
/// `L` is zero. Rows are stored densely, row-major.
pub fn psd_cholesky(cov: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let d = cov.len();
    for row in cov {
        if row.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: row.len() });
        }
    }
    let scale = (0..d).map(|i| cov[i][i].abs()).fold(0.0, f64::max).max(1.0);
    let tol = 1e-12 * scale;
    for i in 0..d {
        for j in 0..i {
            if (cov[i][j] - cov[j][i]).abs() > tol {
                return Err(Error::InvalidArgument("covariance matrix is not symmetric".into()));
            }
        }
    }
    let mut l = vec![vec![0.0; d]; d];
    for j in 0..d {
        let diag = cov[j][j] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        if diag < -tol {
            return Err(Error::NotPositiveSemiDefinite);
        }
        if diag <= tol {
            // Singular direction: every remaining entry in this column must vanish.
            for i in (j + 1)..d {
                let off = cov[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
                if off.abs() > 1e-9 * scale {
                    return Err(Error::NotPositiveSemiDefinite);
                }
            }
            continue;
        }
        let root = diag.sqrt();
        l[j][j] = root;
        for i in (j + 1)..d {
            let off = cov[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            l[i][j] = off / root;
        }
    }
    Ok(l)
}

/// Two-pass sample variance with denominator `n - 1`; `None` below two points.
pub fn sample_variance(xs: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n < 2 {
        return None;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    Some(ss / (n - 1) as f64)
}
