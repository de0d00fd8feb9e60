//! Estimating the number of factors.
//!
//! - [`Method::Svt`]: singular-value thresholding,
//!   `r̂ = max{k : Ṽ_k ≥ σ̂² N^{-1/2} (ln ln N)^{1/2}}`.
//! - [`Method::IcP1`]: the `IC_p1` information criterion with penalty `k (N+T)/(NT) ln(NT/(N+T))`.
//! - [`Method::Ed`]: edge-distribution estimator from eigenvalue differences.
//! - [`Method::Ah`]: eigenvalue ratio.
//!
//! All four share one eigendecomposition of `X′X/(NT)` through [`PcModel`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pc::PcModel;
use crate::panel::Panel;

/// Default largest number of factors searched.
pub const DEFAULT_RMAX: usize = 8;
/// Number of eigenvalues in each ED slope regression.
pub const ED_WINDOW: usize = 5;
/// ED iteration cap.
pub const ED_MAX_ITER: usize = 10;

// Relative size below which a mean square or eigenvalue counts as zero.
const ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "wz")]
    Svt,
    #[serde(rename = "bn")]
    IcP1,
    #[serde(rename = "ed")]
    Ed,
    #[serde(rename = "ah")]
    Ah,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Svt, Method::IcP1, Method::Ed, Method::Ah];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Svt => "wz",
            Method::IcP1 => "bn",
            Method::Ed => "ed",
            Method::Ah => "ah",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "wz" | "svt" => Ok(Method::Svt),
            "bn" | "icp1" => Ok(Method::IcP1),
            "ed" => Ok(Method::Ed),
            "ah" | "er" => Ok(Method::Ah),
            other => Err(Error::InvalidArgument(format!(
                "unknown factor-count method `{other}` (expected wz, bn, ed or ah)"
            ))),
        }
    }
}

/// Per-`k` diagnostic. For SVT the statistic is `Ṽ_k` and the criterion the
/// threshold; for `IC_p1` they are `V(k)` and `IC(k)`; for AH the ratio
/// `μ_k/μ_{k+1}` and `μ_k`; for ED the gap `γ_k − γ_{k+1}` and the final `δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub k: usize,
    pub statistic: f64,
    pub criterion: f64,
}

/// One pass of the ED iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdStep {
    pub start: usize,
    pub delta: f64,
    pub candidate: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorCountResult {
    pub method: Method,
    pub r_hat: usize,
    pub rmax: usize,
    pub diagnostics: Vec<Diagnostic>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ed_trace: Vec<EdStep>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Runs the factor-count rules on one decomposition.
#[derive(Debug, Clone)]
pub struct FactorCounter<'a> {
    model: PcModel<'a>,
}

impl<'a> FactorCounter<'a> {
    pub fn new(panel: &'a Panel) -> Result<Self> {
        Ok(FactorCounter {
            model: PcModel::new(panel)?,
        })
    }

    pub fn from_model(model: PcModel<'a>) -> Self {
        FactorCounter { model }
    }

    pub fn model(&self) -> &PcModel<'a> {
        &self.model
    }

    pub fn select(&self, method: Method, rmax: usize) -> Result<FactorCountResult> {
        match method {
            Method::Svt => self.svt(rmax),
            Method::IcP1 => self.icp1(rmax),
            Method::Ed => self.ed(rmax),
            Method::Ah => self.ah(rmax),
        }
    }

    fn min_dim(&self) -> usize {
        self.model.n().min(self.model.t())
    }

    fn check_rmax(&self, rmax: usize, extra: usize) -> Result<()> {
        if rmax == 0 || rmax + extra > self.min_dim() {
            return Err(Error::InvalidArgument(format!(
                "rmax = {rmax} requires rmax + {extra} ≤ min(N, T) = {}",
                self.min_dim()
            )));
        }
        Ok(())
    }

    fn numerical_rank(&self) -> usize {
        let mu = self.model.eigenvalues();
        let top = mu[0];
        if !(top > 0.0) {
            return 0;
        }
        mu.iter().take_while(|&&m| m > top * ZERO_TOL).count()
    }

    pub fn svt(&self, rmax: usize) -> Result<FactorCountResult> {
        self.check_rmax(rmax, 0)?;
        let n = self.model.n();
        if n < 16 {
            return Err(Error::InvalidArgument(format!(
                "SVT rule needs N ≥ 16 so that ln ln N > 0, got N = {n}"
            )));
        }
        let sigma2 = self.model.mean_sq_resid(rmax)?;
        let scale = self.model.mean_sq_resid(0)?;
        let threshold = sigma2 * (n as f64).powf(-0.5) * (n as f64).ln().ln().sqrt();
        let mu = self.model.eigenvalues();
        let diagnostics: Vec<Diagnostic> = (1..=rmax)
            .map(|k| Diagnostic {
                k,
                statistic: mu[k - 1],
                criterion: threshold,
            })
            .collect();
        let mut notes = Vec::new();
        let r_hat = if sigma2 <= scale * ZERO_TOL {
            notes.push(format!(
                "residual variance is zero with {rmax} factors; returning the numerical rank"
            ));
            self.numerical_rank().min(rmax)
        } else {
            diagnostics
                .iter()
                .filter(|d| d.statistic >= threshold)
                .map(|d| d.k)
                .max()
                .unwrap_or(0)
        };
        Ok(FactorCountResult {
            method: Method::Svt,
            r_hat,
            rmax,
            diagnostics,
            ed_trace: Vec::new(),
            notes,
        })
    }

    pub fn icp1(&self, rmax: usize) -> Result<FactorCountResult> {
        self.check_rmax(rmax, 0)?;
        let (n, t) = (self.model.n() as f64, self.model.t() as f64);
        let penalty = (n + t) / (n * t) * (n * t / (n + t)).ln();
        let scale = self.model.mean_sq_resid(0)?;
        let mut diagnostics = Vec::with_capacity(rmax);
        let mut notes = Vec::new();
        let mut exact = None;
        for k in 1..=rmax {
            let v = self.model.mean_sq_resid(k)?;
            if exact.is_none() && v <= scale * ZERO_TOL {
                exact = Some(k);
            }
            diagnostics.push(Diagnostic {
                k,
                statistic: v,
                criterion: v.ln() + k as f64 * penalty,
            });
        }
        let r_hat = match exact {
            Some(k) => {
                notes.push(format!("rank-deficient: residual variance is zero at k = {k}"));
                k
            }
            None => argmin_first(diagnostics.iter().map(|d| d.criterion)) + 1,
        };
        Ok(FactorCountResult {
            method: Method::IcP1,
            r_hat,
            rmax,
            diagnostics,
            ed_trace: Vec::new(),
            notes,
        })
    }

    pub fn ah(&self, rmax: usize) -> Result<FactorCountResult> {
        self.check_rmax(rmax, 1)?;
        let mu = self.model.eigenvalues();
        let zero = mu[0] * ZERO_TOL;
        let diagnostics: Vec<Diagnostic> = (1..=rmax)
            .map(|k| {
                let (num, den) = (mu[k - 1], mu[k]);
                let ratio = if num <= zero {
                    0.0
                } else if den <= zero {
                    f64::INFINITY
                } else {
                    num / den
                };
                Diagnostic {
                    k,
                    statistic: ratio,
                    criterion: num,
                }
            })
            .collect();
        let mut notes = Vec::new();
        let r_hat = if !(mu[0] > 0.0) {
            notes.push("all eigenvalues are zero".to_string());
            0
        } else {
            argmax_first(diagnostics.iter().map(|d| d.statistic)) + 1
        };
        Ok(FactorCountResult {
            method: Method::Ah,
            r_hat,
            rmax,
            diagnostics,
            ed_trace: Vec::new(),
            notes,
        })
    }

    /// Eigenvalues of `XX′/T`, which are `N` times those of `X′X/(NT)`.
    fn ed_gammas(&self) -> Vec<f64> {
        let n = self.model.n() as f64;
        self.model.eigenvalues().iter().map(|m| m * n).collect()
    }

    pub fn ed(&self, rmax: usize) -> Result<FactorCountResult> {
        self.check_rmax(rmax, ED_WINDOW)?;
        let gamma = self.ed_gammas();
        // gamma is zero-based; eigenvalue index k (1-based) is gamma[k - 1].
        let gap = |k: usize| gamma[k - 1] - gamma[k];
        let candidate_for = |delta: f64| {
            (1..=rmax).filter(|&k| gap(k) >= delta).max().unwrap_or(0)
        };
        let mut trace = Vec::new();
        let mut notes = Vec::new();
        let mut start = rmax + 1;
        let mut converged = false;
        let mut delta = f64::NAN;
        let mut candidate = 0;
        for _ in 0..ED_MAX_ITER {
            delta = 2.0 * ed_slope(&gamma, start).abs();
            candidate = candidate_for(delta);
            trace.push(EdStep {
                start,
                delta,
                candidate,
            });
            if candidate + 1 == start {
                converged = true;
                break;
            }
            start = candidate + 1;
        }
        if !converged {
            notes.push(format!(
                "max-iterations: no fixed point after {ED_MAX_ITER} iterations"
            ));
        }
        let diagnostics = (1..=rmax)
            .map(|k| Diagnostic {
                k,
                statistic: gap(k),
                criterion: delta,
            })
            .collect();
        Ok(FactorCountResult {
            method: Method::Ed,
            r_hat: candidate,
            rmax,
            diagnostics,
            ed_trace: trace,
            notes,
        })
    }
}

/// OLS slope of `γ_j, …, γ_{j+4}` on `(j−1)^{2/3}, …, (j+3)^{2/3}` with an
/// intercept; `j` is one-based.
fn ed_slope(gamma: &[f64], j: usize) -> f64 {
    let xs: Vec<f64> = (0..ED_WINDOW).map(|i| ((j - 1 + i) as f64).powf(2.0 / 3.0)).collect();
    let ys = &gamma[j - 1..j - 1 + ED_WINDOW];
    let m = ED_WINDOW as f64;
    let xbar = xs.iter().sum::<f64>() / m;
    let ybar = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    sxy / sxx
}

fn argmin_first(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

fn argmax_first(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

pub fn select_r_svt(panel: &Panel, rmax: usize) -> Result<FactorCountResult> {
    FactorCounter::new(panel)?.svt(rmax)
}

pub fn select_r_icp1(panel: &Panel, rmax: usize) -> Result<FactorCountResult> {
    FactorCounter::new(panel)?.icp1(rmax)
}

pub fn select_r_ed(panel: &Panel, rmax: usize) -> Result<FactorCountResult> {
    FactorCounter::new(panel)?.ed(rmax)
}

pub fn select_r_ah(panel: &Panel, rmax: usize) -> Result<FactorCountResult> {
    FactorCounter::new(panel)?.ah(rmax)
}
