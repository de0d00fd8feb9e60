//! Loading screening, support recovery and factor-strength estimation.
//!
//! A loading estimate is kept when `|λ̃_ik| > c·(ln NT)^{-1/2}`; the number
//! of survivors `D̂_k` gives the strength estimate `α̂_k = ln D̂_k / ln N`.

use std::collections::BTreeSet;
use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pc::{write_labeled, PcFit};

/// `α̂` at or above this is labelled strong.
pub const STRONG_CUTOFF: f64 = 0.95;
/// `α̂` below this is labelled weak.
pub const WEAK_CUTOFF: f64 = 0.90;

/// Screening threshold `c·(ln NT)^{-1/2}`.
pub fn threshold_value(n: usize, t: usize, c: f64) -> Result<f64> {
    let nt = n.checked_mul(t).ok_or_else(|| Error::InvalidArgument("N·T overflows".into()))?;
    if nt <= 2 {
        return Err(Error::InvalidArgument(format!(
            "N·T = {nt} too small for the screening threshold (need at least 3)"
        )));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("threshold multiplier {c} must be positive")));
    }
    Ok(c / (nt as f64).ln().sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseFit {
    /// `N×r` screened loadings.
    pub lambda_hat: Array2<f64>,
    /// Zero-based row indices of the surviving loadings, per factor.
    pub supports: Vec<Vec<usize>>,
    pub counts: Vec<usize>,
    pub threshold: f64,
    pub c_multiplier: f64,
}

impl SparseFit {
    /// Screens this fit's loadings again.
    pub fn rescreen(&self, threshold: f64) -> SparseFit {
        screen_matrix(&self.lambda_hat, threshold, self.c_multiplier)
    }

    pub fn write_csv<W: Write>(&self, w: W, series_ids: &[String]) -> Result<()> {
        write_labeled(w, "series", series_ids, &self.lambda_hat, "lambda_hat")
    }
}

fn screen_matrix(loadings: &Array2<f64>, threshold: f64, c_multiplier: f64) -> SparseFit {
    let lambda_hat = loadings.mapv(|v| if v.abs() > threshold { v } else { 0.0 });
    let supports: Vec<Vec<usize>> = lambda_hat
        .columns()
        .into_iter()
        .map(|col| {
            col.iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, _)| i)
                .collect()
        })
        .collect();
    let counts = supports.iter().map(Vec::len).collect();
    SparseFit {
        lambda_hat,
        supports,
        counts,
        threshold,
        c_multiplier,
    }
}

/// Hard-thresholds the PC loadings. Entries with `|λ̃| ≤ threshold` become
/// exactly zero.
pub fn screen(fit: &PcFit, threshold: f64) -> Result<SparseFit> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidArgument(format!("threshold {threshold} must be positive")));
    }
    let ln_nt = ((fit.n() * fit.t()) as f64).ln();
    let c = if ln_nt > 0.0 { threshold * ln_nt.sqrt() } else { f64::NAN };
    Ok(screen_matrix(&fit.loadings, threshold, c))
}

/// [`screen`] at the threshold `c·(ln NT)^{-1/2}`.
pub fn screen_with_multiplier(fit: &PcFit, c: f64) -> Result<SparseFit> {
    let threshold = threshold_value(fit.n(), fit.t(), c)?;
    let mut sparse = screen(fit, threshold)?;
    sparse.c_multiplier = c;
    Ok(sparse)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrengthLabel {
    Strong,
    Indeterminate,
    Weak,
    /// No loading survived screening.
    Reduced,
}

impl StrengthLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            StrengthLabel::Strong => "strong",
            StrengthLabel::Indeterminate => "indeterminate",
            StrengthLabel::Weak => "weak",
            StrengthLabel::Reduced => "reduced",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrengthEstimate {
    pub alpha_hat: Vec<f64>,
    pub labels: Vec<StrengthLabel>,
}

fn classify(alpha: f64, count: usize) -> StrengthLabel {
    if count == 0 {
        StrengthLabel::Reduced
    } else if alpha >= STRONG_CUTOFF {
        StrengthLabel::Strong
    } else if alpha < WEAK_CUTOFF {
        StrengthLabel::Weak
    } else {
        StrengthLabel::Indeterminate
    }
}

/// `α̂_k = ln D̂_k / ln N`, set to zero when `D̂_k ≤ 1`.
pub fn strengths(sparse: &SparseFit, n: usize) -> Result<StrengthEstimate> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("strength estimation needs N ≥ 2, got {n}")));
    }
    let ln_n = (n as f64).ln();
    let alpha_hat: Vec<f64> = sparse
        .counts
        .iter()
        .map(|&d| if d >= 2 { (d as f64).ln() / ln_n } else { 0.0 })
        .collect();
    let labels = alpha_hat
        .iter()
        .zip(&sparse.counts)
        .map(|(&a, &d)| classify(a, d))
        .collect();
    Ok(StrengthEstimate { alpha_hat, labels })
}

/// `|L⁰ △ L̂| / N^α`.
pub fn symm_diff_ratio(true_support: &[usize], est_support: &[usize], alpha: f64, n: usize) -> f64 {
    let a: BTreeSet<usize> = true_support.iter().copied().collect();
    let b: BTreeSet<usize> = est_support.iter().copied().collect();
    a.symmetric_difference(&b).count() as f64 / (n as f64).powf(alpha)
}

/// JSON summary written next to the screened-loading CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SparseSummary {
    pub threshold: f64,
    pub c_multiplier: f64,
    pub counts: Vec<usize>,
    pub alpha_hat: Vec<f64>,
    pub labels: Vec<StrengthLabel>,
}

impl SparseSummary {
    pub fn new(sparse: &SparseFit, est: &StrengthEstimate) -> Self {
        SparseSummary {
            threshold: sparse.threshold,
            c_multiplier: sparse.c_multiplier,
            counts: sparse.counts.clone(),
            alpha_hat: est.alpha_hat.clone(),
            labels: est.labels.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};
    use proptest::prelude::*;

    fn fit_with_loadings(loadings: Array2<f64>, t: usize) -> PcFit {
        let (n, r) = loadings.dim();
        PcFit {
            r,
            factors: Array2::zeros((t, r)),
            loadings,
            eigvals: Array1::zeros(r),
            common: Array2::zeros((n, t)),
            resid: Array2::zeros((n, t)),
        }
    }

    #[test]
    fn threshold_examples() {
        let base = threshold_value(200, 200, 1.0).unwrap();
        assert!((base - 0.307197).abs() < 1e-5);
        assert_eq!(threshold_value(200, 200, 2.0).unwrap(), 2.0 * base);
        assert!((threshold_value(3, 1, 1.0).unwrap() - 0.9541).abs() < 1e-4);
        assert!(threshold_value(2, 1, 1.0).is_err());
        assert!(threshold_value(10, 10, 0.0).is_err());
    }

    #[test]
    fn screen_examples() {
        let fit = fit_with_loadings(array![[0.5], [-0.2], [0.31]], 4);
        let s = screen(&fit, 0.307).unwrap();
        assert_eq!(s.supports, vec![vec![0, 2]]);
        assert_eq!(s.counts, vec![2]);
        assert_eq!(s.lambda_hat, array![[0.5], [0.0], [0.31]]);

        let all = screen(&fit, 0.1).unwrap();
        assert_eq!(all.lambda_hat, fit.loadings);
        assert_eq!(all.counts, vec![3]);

        let none = screen(&fit_with_loadings(Array2::zeros((3, 2)), 4), 0.3).unwrap();
        assert_eq!(none.counts, vec![0, 0]);
        assert!(none.supports.iter().all(Vec::is_empty));
    }

    #[test]
    fn boundary_entry_is_zeroed() {
        let fit = fit_with_loadings(array![[0.25], [-0.25]], 4);
        assert_eq!(screen(&fit, 0.25).unwrap().counts, vec![0]);
    }

    #[test]
    fn multiplier_is_recorded() {
        let fit = fit_with_loadings(array![[0.5], [0.1]], 100);
        let s = screen_with_multiplier(&fit, 1.2).unwrap();
        assert_eq!(s.c_multiplier, 1.2);
        assert_eq!(s.threshold, threshold_value(2, 100, 1.2).unwrap());
        let plain = screen(&fit, threshold_value(2, 100, 1.0).unwrap()).unwrap();
        assert!((plain.c_multiplier - 1.0).abs() < 1e-12);
    }

    #[test]
    fn strength_examples() {
        let n = 50;
        let full = SparseFit {
            lambda_hat: Array2::ones((n, 3)),
            supports: vec![(0..n).collect(), vec![4], vec![]],
            counts: vec![n, 1, 0],
            threshold: 0.3,
            c_multiplier: 1.0,
        };
        let est = strengths(&full, n).unwrap();
        assert_eq!(est.alpha_hat, vec![1.0, 0.0, 0.0]);
        assert_eq!(
            est.labels,
            vec![StrengthLabel::Strong, StrengthLabel::Weak, StrengthLabel::Reduced]
        );
        assert!(strengths(&full, 1).is_err());
    }

    #[test]
    fn strength_labels_at_cutoffs() {
        assert_eq!(classify(0.95, 10), StrengthLabel::Strong);
        assert_eq!(classify(0.93, 10), StrengthLabel::Indeterminate);
        assert_eq!(classify(0.90, 10), StrengthLabel::Indeterminate);
        assert_eq!(classify(0.8999, 10), StrengthLabel::Weak);
    }

    #[test]
    fn symm_diff_examples() {
        assert_eq!(symm_diff_ratio(&[1, 2, 3], &[1, 2, 3], 0.7, 10), 0.0);
        assert!((symm_diff_ratio(&[1, 2, 3], &[2, 3, 4], 1.0, 10) - 0.2).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn screening_properties(
            vals in proptest::collection::vec(-2.0f64..2.0, 24),
            t1 in 0.01f64..1.0,
            dt in 0.0f64..1.0,
        ) {
            let loadings = Array2::from_shape_vec((8, 3), vals).unwrap();
            let fit = fit_with_loadings(loadings, 20);
            let lo = screen(&fit, t1).unwrap();
            let hi = screen(&fit, t1 + dt).unwrap();
            // idempotence
            prop_assert_eq!(&lo.rescreen(t1), &lo);
            for k in 0..3 {
                prop_assert!(hi.supports[k].iter().all(|i| lo.supports[k].contains(i)));
                prop_assert_eq!(lo.counts[k], lo.supports[k].len());
            }
            let a_lo = strengths(&lo, 8).unwrap();
            let a_hi = strengths(&hi, 8).unwrap();
            for k in 0..3 {
                prop_assert!(a_hi.alpha_hat[k] <= a_lo.alpha_hat[k]);
                prop_assert!((0.0..=1.0).contains(&a_lo.alpha_hat[k]));
            }
        }
    }
}
