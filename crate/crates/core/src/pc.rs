//! Principal-component estimation of factors and loadings.
//!
//! With `X` the `N×T` panel, the estimated factors `F̃` are `√T` times the
//! eigenvectors of the `T×T` matrix `X′X/(NT)` for its `r` largest
//! eigenvalues, the loadings are `Λ̃ = XF̃/T`, and the common component is
//! `C̃ = Λ̃F̃′`. This normalization gives `F̃′F̃/T = I` and
//! `Λ̃′Λ̃/N = diag(Ṽ)`, where `Ṽ` holds the eigenvalues.

use std::io::Write;

use log::warn;
use ndarray::{s, Array1, Array2};

use crate::error::{Error, Result};
use crate::linalg::{eig_sym_desc, gram, SymEig};
use crate::panel::Panel;

#[derive(Debug, Clone)]
pub struct PcFit {
    pub r: usize,
    /// `T×r`.
    pub factors: Array2<f64>,
    /// `N×r`.
    pub loadings: Array2<f64>,
    /// The `r` largest eigenvalues of `X′X/(NT)`, nonincreasing.
    pub eigvals: Array1<f64>,
    /// `N×T` common component `Λ̃F̃′`.
    pub common: Array2<f64>,
    /// `N×T` residual `X − Λ̃F̃′`.
    pub resid: Array2<f64>,
}

impl PcFit {
    pub fn n(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn t(&self) -> usize {
        self.factors.nrows()
    }

    pub fn write_factors_csv<W: Write>(&self, w: W, time_ids: &[String]) -> Result<()> {
        write_labeled(w, "time", time_ids, &self.factors, "F")
    }

    pub fn write_loadings_csv<W: Write>(&self, w: W, series_ids: &[String]) -> Result<()> {
        write_labeled(w, "series", series_ids, &self.loadings, "lambda")
    }

    pub fn write_eigenvalues_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["k", "eigenvalue"])?;
        for (k, v) in self.eigvals.iter().enumerate() {
            out.write_record([(k + 1).to_string(), v.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn write_labeled<W: Write>(
    w: W,
    corner: &str,
    labels: &[String],
    m: &Array2<f64>,
    prefix: &str,
) -> Result<()> {
    if labels.len() != m.nrows() {
        return Err(Error::Dimension(format!(
            "{} labels for {} rows",
            labels.len(),
            m.nrows()
        )));
    }
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec![corner.to_string()];
    header.extend((1..=m.ncols()).map(|k| format!("{prefix}{k}")));
    out.write_record(&header)?;
    for (label, row) in labels.iter().zip(m.rows()) {
        let mut rec = vec![label.clone()];
        rec.extend(row.iter().map(|v| v.to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// One eigendecomposition of `X′X/(NT)`, reused for fits at any `r`.
#[derive(Debug, Clone)]
pub struct PcModel<'a> {
    x: &'a Array2<f64>,
    eig: SymEig,
}

impl<'a> PcModel<'a> {
    pub fn new(panel: &'a Panel) -> Result<Self> {
        if !panel.is_standardized() {
            warn!("principal components on a panel that is not standardized");
        }
        Self::from_matrix(panel.values())
    }

    pub fn from_matrix(x: &'a Array2<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::Dimension("empty panel".into()));
        }
        let eig = eig_sym_desc(&gram(x))?;
        Ok(PcModel { x, eig })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn t(&self) -> usize {
        self.x.ncols()
    }

    pub fn data(&self) -> &Array2<f64> {
        self.x
    }

    /// All `T` eigenvalues of `X′X/(NT)`, nonincreasing.
    pub fn eigenvalues(&self) -> &Array1<f64> {
        &self.eig.values
    }

    fn check_r(&self, r: usize) -> Result<()> {
        let max = self.n().min(self.t());
        if r == 0 || r > max {
            return Err(Error::InvalidArgument(format!(
                "number of factors {r} outside 1..={max}"
            )));
        }
        Ok(())
    }

    /// `√T` times the leading `r` eigenvectors.
    pub fn factors(&self, r: usize) -> Result<Array2<f64>> {
        self.check_r(r)?;
        let scale = (self.t() as f64).sqrt();
        Ok(self.eig.vectors.slice(s![.., ..r]).mapv(|v| v * scale))
    }

    pub fn fit(&self, r: usize) -> Result<PcFit> {
        let factors = self.factors(r)?;
        let loadings = self.x.dot(&factors) / self.t() as f64;
        let common = loadings.dot(&factors.t());
        let resid = self.x - &common;
        Ok(PcFit {
            r,
            factors,
            loadings,
            eigvals: self.eig.values.slice(s![..r]).to_owned(),
            common,
            resid,
        })
    }

    /// Mean squared residual `(NT)⁻¹ Σ (X − Λ̃F̃′)²` of the `k`-factor fit,
    /// computed from the residual matrix. `k = 0` gives the mean square of `X`.
    pub fn mean_sq_resid(&self, k: usize) -> Result<f64> {
        let nt = (self.n() * self.t()) as f64;
        if k == 0 {
            return Ok(self.x.iter().map(|v| v * v).sum::<f64>() / nt);
        }
        let fit = self.fit(k)?;
        Ok(fit.resid.iter().map(|v| v * v).sum::<f64>() / nt)
    }
}

pub fn pc_fit(panel: &Panel, r: usize) -> Result<PcFit> {
    PcModel::new(panel)?.fit(r)
}

/// Noise-variance estimate `σ̂²`: mean squared residual with `rmax` factors.
pub fn sigma_hat(panel: &Panel, rmax: usize) -> Result<f64> {
    PcModel::new(panel)?.mean_sq_resid(rmax)
}
