//! Data-generating process for sparse weak factor panels.
//!
//! ```text
//! X_it  = λ_i′F_t + e_it
//! F_1t  = 0.5 F_1,t−1 + u_1t
//! F_kt  = (−0.8)^k F_1t + u_kt,      k = 2..r
//! ```
//!
//! Factor `k` loads on a random subset of `⌊N^{α_k}⌋` units with iid
//! `N(0,1)` loadings. Errors are Student-t(5) innovations, rescaled to unit
//! variance and mixed through a block-diagonal covariance of 4×4 blocks, of
//! which `⌊N^{0.3}⌋` randomly chosen ones have entries `0.5^{|m−n|}`.
//!
//! Every generator is a pure function of its seed. Sub-seeds come from
//! [`derive_seed`], so replication `i` never shares a stream with `j`.

use ndarray::{Array2, Axis};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{row_location_scale, standardize, Panel};

pub const AR_COEF: f64 = 0.5;
pub const CROSS_COEF: f64 = -0.8;
pub const T_DOF: f64 = 5.0;
pub const BLOCK_SIZE: usize = 4;
pub const BLOCK_CORR: f64 = 0.5;
pub const CORRELATED_BLOCK_EXPONENT: f64 = 0.3;
pub const DEFAULT_BURN_IN: usize = 100;
pub const MIN_BURN_IN: usize = 50;

const STREAM_FACTORS: u64 = 1;
const STREAM_LOADINGS: u64 = 2;
const STREAM_ERRORS: u64 = 3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for stream `index` of `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `⌊N^α⌋`, guarded against `powf` landing just under an integer.
pub fn support_size(n: usize, alpha: f64) -> usize {
    ((n as f64).powf(alpha) + 1e-9).floor() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SupportMode {
    #[default]
    Random,
    Contiguous,
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

fn default_error_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub t: usize,
    pub r: usize,
    /// Factor strengths, nonincreasing, each in `(0.5, 1]`.
    pub alpha: Vec<f64>,
    pub seed: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub support_mode: SupportMode,
    /// One-based inclusive `[first, last]` unit ranges per factor, used when
    /// `support_mode` is `contiguous`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contiguous_ranges: Option<Vec<[usize; 2]>>,
    /// Multiplies the idiosyncratic errors; `0` gives a noise-free panel.
    #[serde(default = "default_error_scale")]
    pub error_scale: f64,
    /// Overrides the number of correlated error blocks (default `⌊N^{0.3}⌋`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlated_blocks: Option<usize>,
    /// Standardize every simulated series before estimation. Off by default:
    /// the reference Monte Carlo results are reproduced on the raw scale.
    #[serde(default)]
    pub standardize: bool,
}

impl SimConfig {
    pub fn new(n: usize, t: usize, alpha: Vec<f64>, seed: u64) -> Self {
        SimConfig {
            n,
            t,
            r: alpha.len(),
            alpha,
            seed,
            burn_in: DEFAULT_BURN_IN,
            support_mode: SupportMode::Random,
            contiguous_ranges: None,
            error_scale: 1.0,
            correlated_blocks: None,
            standardize: false,
        }
    }

    /// Same design with a different master seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        SimConfig {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.r == 0 || self.alpha.len() != self.r {
            return bad(format!("r = {} but {} strengths given", self.r, self.alpha.len()));
        }
        if self.n < BLOCK_SIZE || self.t < 2 {
            return bad(format!("panel {}×{} too small", self.n, self.t));
        }
        if self.alpha.iter().any(|&a| !(a > 0.5 && a <= 1.0)) {
            return bad(format!("strengths {:?} must lie in (0.5, 1]", self.alpha));
        }
        if self.alpha.windows(2).any(|w| w[0] < w[1]) {
            return bad(format!("strengths {:?} must be nonincreasing", self.alpha));
        }
        if self.burn_in < MIN_BURN_IN {
            return bad(format!("burn_in {} below {MIN_BURN_IN}", self.burn_in));
        }
        if !(self.error_scale >= 0.0 && self.error_scale.is_finite()) {
            return bad(format!("error_scale {} must be finite and nonnegative", self.error_scale));
        }
        match (self.support_mode, &self.contiguous_ranges) {
            (SupportMode::Contiguous, None) => bad("contiguous support mode needs ranges".into()),
            (SupportMode::Random, Some(_)) => {
                bad("contiguous_ranges given but support_mode is random".into())
            }
            (SupportMode::Contiguous, Some(ranges)) if ranges.len() != self.r => {
                bad(format!("{} ranges for {} factors", ranges.len(), self.r))
            }
            _ => Ok(()),
        }
    }
}

/// Block-diagonal error covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCovariance {
    pub n: usize,
    pub blocks: Vec<CovBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovBlock {
    pub start: usize,
    pub size: usize,
    /// `0.5^{|m−n|}` when true, identity otherwise.
    pub correlated: bool,
}

impl ErrorCovariance {
    pub fn correlated_count(&self) -> usize {
        self.blocks.iter().filter(|b| b.correlated).count()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.n, self.n));
        for b in &self.blocks {
            for i in 0..b.size {
                for j in 0..b.size {
                    m[[b.start + i, b.start + j]] = if b.correlated {
                        BLOCK_CORR.powi((i as i32 - j as i32).abs())
                    } else if i == j {
                        1.0
                    } else {
                        0.0
                    };
                }
            }
        }
        m
    }
}

/// `T×r` factor matrix. Factor 1 is a stationary AR(1) started from its
/// stationary law `N(0, 1/(1 − 0.25))` and run through `burn_in` steps.
pub fn gen_factors(t: usize, r: usize, seed: u64, burn_in: usize) -> Result<Array2<f64>> {
    if burn_in < MIN_BURN_IN {
        return Err(Error::InvalidArgument(format!("burn_in {burn_in} below {MIN_BURN_IN}")));
    }
    if r == 0 {
        return Err(Error::InvalidArgument("need at least one factor".into()));
    }
    let mut rng = rng_from(seed);
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    let stationary_sd = (1.0 / (1.0 - AR_COEF * AR_COEF)).sqrt();
    let mut f1 = stationary_sd * normal();
    for _ in 0..burn_in {
        f1 = AR_COEF * f1 + normal();
    }
    let mut out = Array2::zeros((t, r));
    for s in 0..t {
        f1 = AR_COEF * f1 + normal();
        out[[s, 0]] = f1;
        for k in 2..=r {
            out[[s, k - 1]] = CROSS_COEF.powi(k as i32) * f1 + normal();
        }
    }
    Ok(out)
}

/// `N×r` sparse loadings and their zero-based supports.
pub fn gen_loadings(
    n: usize,
    alpha: &[f64],
    seed: u64,
    mode: SupportMode,
    ranges: Option<&[[usize; 2]]>,
) -> Result<(Array2<f64>, Vec<Vec<usize>>)> {
    let r = alpha.len();
    let mut rng = rng_from(seed);
    let mut loadings = Array2::zeros((n, r));
    let mut supports = Vec::with_capacity(r);
    for (k, &a) in alpha.iter().enumerate() {
        let size = support_size(n, a);
        if size == 0 || size > n {
            return Err(Error::InvalidArgument(format!(
                "factor {} support size {size} invalid for N = {n}",
                k + 1
            )));
        }
        let mut idx: Vec<usize> = match mode {
            SupportMode::Random => sample(&mut rng, n, size).into_vec(),
            SupportMode::Contiguous => {
                let ranges = ranges.ok_or_else(|| {
                    Error::InvalidArgument("contiguous support mode needs ranges".into())
                })?;
                let [first, last] = *ranges.get(k).ok_or_else(|| {
                    Error::InvalidArgument(format!("no range for factor {}", k + 1))
                })?;
                if first == 0 || last < first || last > n {
                    return Err(Error::InvalidArgument(format!(
                        "range [{first}, {last}] for factor {} outside 1..={n}",
                        k + 1
                    )));
                }
                if last - first + 1 != size {
                    return Err(Error::InvalidArgument(format!(
                        "range [{first}, {last}] for factor {} has {} units, strength {a} needs {size}",
                        k + 1,
                        last - first + 1
                    )));
                }
                (first - 1..last).collect()
            }
        };
        idx.sort_unstable();
        for &i in &idx {
            loadings[[i, k]] = rng.sample(StandardNormal);
        }
        supports.push(idx);
    }
    Ok((loadings, supports))
}

/// Block layout: `⌊N/4⌋` blocks of four, plus an identity block for the
/// remainder which never enters the correlated-block draw.
fn error_covariance<R: Rng>(n: usize, correlated: Option<usize>, rng: &mut R) -> ErrorCovariance {
    let full = n / BLOCK_SIZE;
    let target = correlated
        .unwrap_or_else(|| support_size(n, CORRELATED_BLOCK_EXPONENT))
        .min(full);
    let mut flags = vec![false; full];
    for b in sample(rng, full, target) {
        flags[b] = true;
    }
    let mut blocks: Vec<CovBlock> = flags
        .into_iter()
        .enumerate()
        .map(|(b, correlated)| CovBlock {
            start: b * BLOCK_SIZE,
            size: BLOCK_SIZE,
            correlated,
        })
        .collect();
    if !n.is_multiple_of(BLOCK_SIZE) {
        blocks.push(CovBlock {
            start: full * BLOCK_SIZE,
            size: n % BLOCK_SIZE,
            correlated: false,
        });
    }
    ErrorCovariance { n, blocks }
}

/// `N×T` errors `e_t = L z_t` with `z_it` iid unit-variance Student-t(5) and
/// `L` the block Cholesky factor of the returned covariance.
pub fn gen_errors(
    n: usize,
    t: usize,
    seed: u64,
    correlated_blocks: Option<usize>,
) -> Result<(Array2<f64>, ErrorCovariance)> {
    if n < BLOCK_SIZE {
        return Err(Error::InvalidArgument(format!(
            "error design needs N ≥ {BLOCK_SIZE}, got {n}"
        )));
    }
    let mut rng = rng_from(seed);
    let cov = error_covariance(n, correlated_blocks, &mut rng);
    let tdist = StudentT::new(T_DOF).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let unit = ((T_DOF - 2.0) / T_DOF).sqrt();
    let mut z = Array2::zeros((n, t));
    for s in 0..t {
        for i in 0..n {
            z[[i, s]] = unit * tdist.sample(&mut rng);
        }
    }
    // The Cholesky factor of 0.5^{|m−n|} is the AR(1) recursion
    // e_m = 0.5 e_{m−1} + √(1 − 0.25) z_m within each correlated block.
    let innov = (1.0 - BLOCK_CORR * BLOCK_CORR).sqrt();
    for b in cov.blocks.iter().filter(|b| b.correlated) {
        for s in 0..t {
            for m in 1..b.size {
                let i = b.start + m;
                z[[i, s]] = BLOCK_CORR * z[[i - 1, s]] + innov * z[[i, s]];
            }
        }
    }
    Ok((z, cov))
}

/// Ground truth for a simulated panel, on the scale of the raw data.
#[derive(Debug, Clone)]
pub struct SimTruth {
    /// `T×r`.
    pub f0: Array2<f64>,
    /// `N×r`.
    pub lambda0: Array2<f64>,
    pub supports0: Vec<Vec<usize>>,
    /// `N×T`, `Λ⁰F⁰′`.
    pub c0: Array2<f64>,
    pub sigma_e: ErrorCovariance,
    /// Row means removed by standardization (zeros on the raw scale).
    pub row_means: Vec<f64>,
    /// Row standard deviations divided out by standardization (ones on the
    /// raw scale).
    pub row_sds: Vec<f64>,
}

impl SimTruth {
    /// Loadings on the scale of the returned panel, `λ⁰_i / sd_i`.
    pub fn lambda0_panel_scale(&self) -> Array2<f64> {
        let mut out = self.lambda0.clone();
        for (mut row, sd) in out.axis_iter_mut(Axis(0)).zip(&self.row_sds) {
            row.mapv_inplace(|v| v / sd);
        }
        out
    }

    /// Common component on the scale of the returned panel, `C⁰_it / sd_i`.
    pub fn c0_panel_scale(&self) -> Array2<f64> {
        let mut out = self.c0.clone();
        for (mut row, sd) in out.axis_iter_mut(Axis(0)).zip(&self.row_sds) {
            row.mapv_inplace(|v| v / sd);
        }
        out
    }
}

/// Simulates a panel, standardized when the config asks for it, together
/// with the raw-scale truth and the per-series location and scale.
pub fn simulate_panel(config: &SimConfig) -> Result<(Panel, SimTruth)> {
    config.validate()?;
    let f0 = gen_factors(
        config.t,
        config.r,
        derive_seed(config.seed, STREAM_FACTORS),
        config.burn_in,
    )?;
    let (lambda0, supports0) = gen_loadings(
        config.n,
        &config.alpha,
        derive_seed(config.seed, STREAM_LOADINGS),
        config.support_mode,
        config.contiguous_ranges.as_deref(),
    )?;
    let (errors, sigma_e) = gen_errors(
        config.n,
        config.t,
        derive_seed(config.seed, STREAM_ERRORS),
        config.correlated_blocks,
    )?;
    let c0 = lambda0.dot(&f0.t());
    let raw = &c0 + &(errors * config.error_scale);
    let (panel, row_means, row_sds) = if config.standardize {
        let (means, sds) = row_location_scale(&raw);
        (standardize(&Panel::from_matrix(raw)?)?, means, sds)
    } else {
        (Panel::from_matrix(raw)?, vec![0.0; config.n], vec![1.0; config.n])
    };
    Ok((
        panel,
        SimTruth {
            f0,
            lambda0,
            supports0,
            c0,
            sigma_e,
            row_means,
            row_sds,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn support_sizes() {
        assert_eq!(support_size(200, 0.9), 117);
        assert_eq!(support_size(200, 0.7), 40);
        assert_eq!(support_size(200, 1.0), 200);
        assert_eq!(support_size(100, 0.5), 10);
        assert_eq!(support_size(200, 0.3), 4);
    }

    #[test]
    fn derive_seed_separates_streams() {
        let a: Vec<u64> = (0..100).map(|i| derive_seed(7, i)).collect();
        let mut b = a.clone();
        b.sort_unstable();
        b.dedup();
        assert_eq!(b.len(), 100);
        assert_ne!(derive_seed(7, 0), derive_seed(8, 0));
    }

    #[test]
    fn loadings_full_strength_and_sizes() {
        let (l, s) = gen_loadings(50, &[1.0], 3, SupportMode::Random, None).unwrap();
        assert_eq!(s[0].len(), 50);
        assert!(l.iter().all(|&v| v != 0.0));
        let (l, s) = gen_loadings(200, &[0.9, 0.7], 4, SupportMode::Random, None).unwrap();
        assert_eq!((s[0].len(), s[1].len()), (117, 40));
        for k in 0..2 {
            let nonzero: Vec<usize> = (0..200).filter(|&i| l[[i, k]] != 0.0).collect();
            assert_eq!(nonzero, s[k]);
        }
    }

    #[test]
    fn contiguous_supports() {
        let ranges = [[1, 117], [97, 136]];
        let (_, s) = gen_loadings(200, &[0.9, 0.7], 1, SupportMode::Contiguous, Some(&ranges)).unwrap();
        assert_eq!(s[0], (0..117).collect::<Vec<_>>());
        assert_eq!(s[1], (96..136).collect::<Vec<_>>());
        let bad = [[1, 100], [97, 136]];
        assert!(gen_loadings(200, &[0.9, 0.7], 1, SupportMode::Contiguous, Some(&bad)).is_err());
    }

    #[test]
    fn covariance_layout() {
        let (_, cov) = gen_errors(10, 5, 1, None).unwrap();
        assert_eq!(cov.blocks.len(), 3);
        assert_eq!(cov.blocks[2].size, 2);
        assert!(!cov.blocks[2].correlated);
        // ⌊10^0.3⌋ = 1
        assert_eq!(cov.correlated_count(), 1);
        let dense = cov.to_dense();
        for i in 0..10 {
            assert_eq!(dense[[i, i]], 1.0);
        }
        assert!(gen_errors(3, 5, 1, None).is_err());
    }

    #[test]
    fn config_validation() {
        let ok = SimConfig::new(100, 100, vec![0.9, 0.75, 0.6], 1);
        assert!(ok.validate().is_ok());
        assert!(SimConfig::new(100, 100, vec![0.6, 0.9], 1).validate().is_err());
        assert!(SimConfig::new(100, 100, vec![0.4], 1).validate().is_err());
        let mut c = ok.clone();
        c.support_mode = SupportMode::Contiguous;
        assert!(c.validate().is_err());
        let json = serde_json::to_string(&ok).unwrap();
        let back: SimConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ok);
        let minimal: SimConfig =
            serde_json::from_str(r#"{"n":50,"t":40,"r":1,"alpha":[0.8],"seed":3}"#).unwrap();
        assert_eq!(minimal.burn_in, DEFAULT_BURN_IN);
        assert_eq!(minimal.error_scale, 1.0);
    }

    #[test]
    fn simulate_is_deterministic_and_standardized() {
        let mut cfg = SimConfig::new(40, 30, vec![0.9, 0.7], 11);
        cfg.standardize = true;
        let (p1, t1) = simulate_panel(&cfg).unwrap();
        let (p2, t2) = simulate_panel(&cfg).unwrap();
        assert_eq!(p1.values(), p2.values());
        assert_eq!(t1.c0, t2.c0);
        assert!(p1.check_standardized());
        let (p3, _) = simulate_panel(&cfg.with_seed(12)).unwrap();
        let dist: f64 = (p1.values() - p3.values()).iter().map(|v| v * v).sum();
        assert!(dist > 0.0);
    }

    #[test]
    fn raw_scale_panel_is_truth_plus_noise() {
        let mut cfg = SimConfig::new(24, 20, vec![0.9], 5);
        cfg.error_scale = 0.0;
        let (p, truth) = simulate_panel(&cfg).unwrap();
        assert_eq!(p.values(), &truth.c0);
        assert_eq!(truth.c0_panel_scale(), truth.c0);
        assert!(!p.is_standardized());
    }
}
