//! Rolling-window estimation and censored loading heat maps for macro
//! panels.
//!
//! Each window is treated as a fresh panel: it is re-standardized, the
//! number of factors is estimated, and the SVT estimate drives screening
//! and strength estimation. Windows advance one period at a time.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor_count::{FactorCounter, Method};
use crate::panel::{standardize, Panel};
use crate::pc::PcModel;
use crate::sparsity::{screen_with_multiplier, strengths, SparseFit, StrengthEstimate};

pub const DEFAULT_WINDOW: usize = 120;
/// Upper clip applied to `|λ̂|` in heat-map exports.
pub const HEATMAP_CENSOR: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingResult {
    pub window_length: usize,
    pub rmax: usize,
    pub c_multiplier: f64,
    /// Right end point of each window.
    pub endpoints: Vec<String>,
    pub r_hat_series: BTreeMap<Method, Vec<usize>>,
    /// Strength estimates at the SVT factor count, sorted nonincreasing.
    pub strength_series: Vec<Vec<f64>>,
    pub notes: Vec<Vec<String>>,
}

struct WindowRecord {
    r_hat: BTreeMap<Method, usize>,
    alpha: Vec<f64>,
    notes: Vec<String>,
}

fn estimate_window(
    panel: &Panel,
    methods: &[Method],
    rmax: usize,
    c: f64,
) -> Result<WindowRecord> {
    let std_panel = standardize(panel)?;
    let counter = FactorCounter::new(&std_panel)?;
    let mut r_hat = BTreeMap::new();
    let mut notes = Vec::new();
    let svt = counter.svt(rmax)?;
    notes.extend(svt.notes.iter().cloned());
    let r_svt = svt.r_hat;
    for &m in methods {
        let res = if m == Method::Svt { svt.clone() } else { counter.select(m, rmax)? };
        if m != Method::Svt {
            notes.extend(res.notes.iter().map(|n| format!("{m}: {n}")));
        }
        r_hat.insert(m, res.r_hat);
    }
    let alpha = if r_svt == 0 {
        notes.push("no factors selected".to_string());
        Vec::new()
    } else {
        let fit = counter.model().fit(r_svt)?;
        let sparse = screen_with_multiplier(&fit, c)?;
        let mut a = strengths(&sparse, std_panel.n())?.alpha_hat;
        a.sort_by(|x, y| y.total_cmp(x));
        a
    };
    Ok(WindowRecord { r_hat, alpha, notes })
}

/// Estimates factor counts and strengths on every window `[t − w + 1, t]`,
/// `t = w..T`.
pub fn rolling_analysis(
    panel: &Panel,
    window: usize,
    methods: &[Method],
    rmax: usize,
    c: f64,
) -> Result<RollingResult> {
    if window == 0 || window > panel.t() {
        return Err(Error::InvalidArgument(format!(
            "window {window} must be in 1..={}",
            panel.t()
        )));
    }
    let mut methods = methods.to_vec();
    methods.sort_unstable();
    methods.dedup();
    let ends: Vec<usize> = (window..=panel.t()).collect();
    let records = ends
        .par_iter()
        .map(|&end| {
            let sub = panel.time_slice(end - window, end)?;
            estimate_window(&sub, &methods, rmax, c).map_err(|e| match e {
                Error::ConstantSeries(s) => Error::ConstantSeries(format!(
                    "{s} (window ending {})",
                    panel.time_ids()[end - 1]
                )),
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut r_hat_series: BTreeMap<Method, Vec<usize>> =
        methods.iter().map(|&m| (m, Vec::with_capacity(records.len()))).collect();
    let mut strength_series = Vec::with_capacity(records.len());
    let mut notes = Vec::with_capacity(records.len());
    for rec in records {
        for (m, r) in rec.r_hat {
            r_hat_series.get_mut(&m).expect("method registered").push(r);
        }
        strength_series.push(rec.alpha);
        notes.push(rec.notes);
    }
    Ok(RollingResult {
        window_length: window,
        rmax,
        c_multiplier: c,
        endpoints: ends.iter().map(|&e| panel.time_ids()[e - 1].clone()).collect(),
        r_hat_series,
        strength_series,
        notes,
    })
}

impl RollingResult {
    /// One row per window end point: `r̂` per method, then `α̂_1..α̂_rmax`
    /// with empty cells past the window's factor count.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["end".to_string()];
        header.extend(self.r_hat_series.keys().map(|m| format!("r_{m}")));
        header.extend((1..=self.rmax).map(|k| format!("alpha_{k}")));
        out.write_record(&header)?;
        for (i, end) in self.endpoints.iter().enumerate() {
            let mut rec = vec![end.clone()];
            rec.extend(self.r_hat_series.values().map(|s| s[i].to_string()));
            let alpha = &self.strength_series[i];
            rec.extend((0..self.rmax).map(|k| alpha.get(k).map(|a| a.to_string()).unwrap_or_default()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// `min(|v|, 3)`.
pub fn censor(v: f64) -> f64 {
    v.abs().min(HEATMAP_CENSOR)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapExport {
    /// `N×r` row-major values of `min(|λ̂|, 3)`.
    pub values: Vec<Vec<f64>>,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub alpha_hat: Vec<f64>,
    pub period: (String, String),
    pub threshold: f64,
}

impl HeatmapExport {
    /// Builds the export from a screened fit. Columns stay in PC order and
    /// carry the strength rank (1 = strongest) and `α̂`.
    pub fn from_sparse(
        sparse: &SparseFit,
        est: &StrengthEstimate,
        panel: &Panel,
        period: (String, String),
    ) -> Self {
        let r = est.alpha_hat.len();
        let mut order: Vec<usize> = (0..r).collect();
        order.sort_by(|&a, &b| est.alpha_hat[b].total_cmp(&est.alpha_hat[a]).then(a.cmp(&b)));
        let mut rank = vec![0; r];
        for (pos, &k) in order.iter().enumerate() {
            rank[k] = pos + 1;
        }
        let col_labels = (0..r)
            .map(|k| format!("PC{} [rank {}] ({:.3})", k + 1, rank[k], est.alpha_hat[k]))
            .collect();
        let row_labels = panel
            .series_ids()
            .iter()
            .enumerate()
            .map(|(i, name)| match panel.group_ids() {
                Some(g) => format!("#{} {name}", g[i]),
                None => name.clone(),
            })
            .collect();
        let values = sparse
            .lambda_hat
            .rows()
            .into_iter()
            .map(|row| row.iter().map(|&v| censor(v)).collect())
            .collect();
        HeatmapExport {
            values,
            row_labels,
            col_labels,
            alpha_hat: est.alpha_hat.clone(),
            period,
            threshold: sparse.threshold,
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# period: {} to {}", self.period.0, self.period.1)?;
        writeln!(w, "# factors: {}", self.col_labels.len())?;
        writeln!(w, "# threshold: {}", self.threshold)?;
        writeln!(w, "# values: |lambda_hat| right-censored at {HEATMAP_CENSOR}")?;
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["series".to_string()];
        header.extend(self.col_labels.iter().cloned());
        out.write_record(&header)?;
        for (label, row) in self.row_labels.iter().zip(&self.values) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Fits the subperiod `[start, end)` (column indices), screens at the SVT
/// factor count (or `r` when given), and exports censored loadings.
pub fn subperiod_heatmap(
    panel: &Panel,
    start: usize,
    end: usize,
    rmax: usize,
    r: Option<usize>,
    c: f64,
) -> Result<HeatmapExport> {
    let sub = standardize(&panel.time_slice(start, end)?)?;
    let model = PcModel::new(&sub)?;
    let r = match r {
        Some(r) => r,
        None => FactorCounter::from_model(model.clone()).svt(rmax)?.r_hat,
    };
    let period = (sub.time_ids()[0].clone(), sub.time_ids()[sub.t() - 1].clone());
    if r == 0 {
        let empty = SparseFit {
            lambda_hat: ndarray::Array2::zeros((sub.n(), 0)),
            supports: Vec::new(),
            counts: Vec::new(),
            threshold: crate::sparsity::threshold_value(sub.n(), sub.t(), c)?,
            c_multiplier: c,
        };
        let est = StrengthEstimate {
            alpha_hat: Vec::new(),
            labels: Vec::new(),
        };
        return Ok(HeatmapExport::from_sparse(&empty, &est, &sub, period));
    }
    let fit = model.fit(r)?;
    let sparse = screen_with_multiplier(&fit, c)?;
    let est = strengths(&sparse, sub.n())?;
    Ok(HeatmapExport::from_sparse(&sparse, &est, &sub, period))
}
