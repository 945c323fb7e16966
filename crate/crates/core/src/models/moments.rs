//! Empirical conditional means and variances over discrete covariate cells.

use std::collections::BTreeMap;

use crate::types::{Arm, CovariateSelector, PatientRecord};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMoment {
    pub count: usize,
    pub mean: f64,
    /// Sample variance (denominator `count - 1`); `None` when `count < 2`.
    pub variance: Option<f64>,
}

impl CellMoment {
    pub fn is_complete(&self) -> bool {
        self.variance.is_some()
    }
}

/// Per-cell outcome moments for one arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalMoments {
    pub arm: Arm,
    pub cells: BTreeMap<u32, CellMoment>,
}

impl ConditionalMoments {
    pub fn get(&self, cell: u32) -> Option<&CellMoment> {
        self.cells.get(&cell)
    }

    pub fn total_count(&self) -> usize {
        self.cells.values().map(|c| c.count).sum()
    }
}

/// Sample mean and variance of `Y` among records with `A = arm` in each cell
/// of `selector`.
pub fn empirical_conditional_moments<'a, I>(records: I, arm: Arm, selector: &CovariateSelector) -> ConditionalMoments
where
    I: IntoIterator<Item = &'a PatientRecord>,
{
    let mut groups: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
    for r in records.into_iter().filter(|r| r.arm == arm) {
        groups.entry(selector.cell(&r.w)).or_default().push(r.y);
    }
    let cells = groups
        .into_iter()
        .map(|(cell, ys)| {
            let n = ys.len();
            let mean = ys.iter().sum::<f64>() / n as f64;
            let variance = (n >= 2).then(|| ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / (n - 1) as f64);
            (cell, CellMoment { count: n, mean, variance })
        })
        .collect();
    ConditionalMoments { arm, cells }
}
