//! Evaluation statistics against simulated truth.

use std::collections::BTreeSet;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::linalg::spd_solve;

/// Trace statistic `Tr(A′B(B′B)⁻¹B′A) / Tr(A′A)`: the share of the truth
/// `A` explained by projecting onto the span of the estimate `B`.
pub fn trace_stat(truth: &Array2<f64>, est: &Array2<f64>) -> Result<f64> {
    if truth.nrows() != est.nrows() {
        return Err(Error::Dimension(format!(
            "truth has {} rows, estimate has {}",
            truth.nrows(),
            est.nrows()
        )));
    }
    let btb = est.t().dot(est);
    let bta = est.t().dot(truth);
    let coef = spd_solve(&btb, &bta)?;
    let num: f64 = bta.iter().zip(coef.iter()).map(|(a, b)| a * b).sum();
    let den: f64 = truth.iter().map(|v| v * v).sum();
    if !(den > 0.0) {
        return Err(Error::Singular("truth has zero norm".into()));
    }
    Ok(num / den)
}

/// `TR^F` for `T×r` true and estimated factors.
pub fn trace_stat_f(f0: &Array2<f64>, f_tilde: &Array2<f64>) -> Result<f64> {
    trace_stat(f0, f_tilde)
}

/// `TR^Λ` for `N×r` true and estimated loadings.
pub fn trace_stat_lambda(lambda0: &Array2<f64>, lambda_tilde: &Array2<f64>) -> Result<f64> {
    trace_stat(lambda0, lambda_tilde)
}

/// Root mean squared difference of two common-component matrices.
pub fn rmse_c(c0: &Array2<f64>, c_tilde: &Array2<f64>) -> Result<f64> {
    if c0.dim() != c_tilde.dim() {
        return Err(Error::Dimension(format!("{:?} vs {:?}", c0.dim(), c_tilde.dim())));
    }
    let ss: f64 = c0.iter().zip(c_tilde).map(|(a, b)| (a - b).powi(2)).sum();
    Ok((ss / c0.len() as f64).sqrt())
}

/// Counts behind FDP and recall for one support pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SupportCounts {
    pub true_size: usize,
    pub est_size: usize,
    pub hits: usize,
}

impl SupportCounts {
    pub fn new(true_support: &[usize], est_support: &[usize]) -> Self {
        let truth: BTreeSet<usize> = true_support.iter().copied().collect();
        let est: BTreeSet<usize> = est_support.iter().copied().collect();
        SupportCounts {
            true_size: truth.len(),
            est_size: est.len(),
            hits: truth.intersection(&est).count(),
        }
    }

    /// `|Sᶜ ∩ Ŝ| / (|Ŝ| ∨ 1)`.
    pub fn fdp(&self) -> f64 {
        (self.est_size - self.hits) as f64 / self.est_size.max(1) as f64
    }

    /// `|S ∩ Ŝ| / (|S| ∨ 1)`.
    pub fn power(&self) -> f64 {
        self.hits as f64 / self.true_size.max(1) as f64
    }
}

impl std::ops::Add for SupportCounts {
    type Output = SupportCounts;

    fn add(self, o: SupportCounts) -> SupportCounts {
        SupportCounts {
            true_size: self.true_size + o.true_size,
            est_size: self.est_size + o.est_size,
            hits: self.hits + o.hits,
        }
    }
}

/// `(FDP, power)` of an estimated support.
pub fn fdr_power(true_support: &[usize], est_support: &[usize]) -> (f64, f64) {
    let c = SupportCounts::new(true_support, est_support);
    (c.fdp(), c.power())
}

/// `(FDP, power)` pooled over all factors' supports, paired by column.
pub fn fdr_power_pooled(true_supports: &[Vec<usize>], est_supports: &[Vec<usize>]) -> (f64, f64) {
    let total = true_supports
        .iter()
        .zip(est_supports)
        .map(|(s, e)| SupportCounts::new(s, e))
        .fold(SupportCounts::default(), |a, b| a + b);
    (total.fdp(), total.power())
}

/// Rotation matrix `Q = F̃′F⁰/T` (`r̃×r`).
pub fn rotation_q(f_tilde: &Array2<f64>, f0: &Array2<f64>) -> Result<Array2<f64>> {
    if f_tilde.nrows() != f0.nrows() {
        return Err(Error::Dimension(format!(
            "estimated factors have {} rows, true factors {}",
            f_tilde.nrows(),
            f0.nrows()
        )));
    }
    Ok(f_tilde.t().dot(f0) / f0.nrows() as f64)
}

/// Strictly lower entries of `Q` rescaled by their expected order,
/// `|Q_lk| · N^{α_k − α_l}` for `l > k`, as `(l, k, value)` with one-based
/// indices.
pub fn triangularity(q: &Array2<f64>, alpha: &[f64], n: usize) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    let r = q.nrows().min(q.ncols()).min(alpha.len());
    for l in 0..r {
        for k in 0..l {
            let scaled = q[[l, k]].abs() * (n as f64).powf(alpha[k] - alpha[l]);
            out.push((l + 1, k + 1, scaled));
        }
    }
    out
}
