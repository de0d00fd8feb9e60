//! Monte Carlo replication harness: simulate, estimate, score, aggregate.
//!
//! Replication `i` draws from `derive_seed(config.seed, i)`, so every
//! record is a pure function of the config and its index. Records are
//! gathered in index order and aggregated serially, which keeps reports
//! byte-identical for any worker count.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor_count::{FactorCounter, Method, DEFAULT_RMAX};
use crate::linalg::singular_values;
use crate::metrics::{rmse_c, rotation_q, trace_stat_f, trace_stat_lambda, SupportCounts};
use crate::pc::PcModel;
use crate::simulate::{derive_seed, simulate_panel, SimConfig};
use crate::sparsity::{screen_with_multiplier, strengths, symm_diff_ratio};

/// Something to run on each replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Task {
    /// Select the number of factors with the given rule.
    Count(Method),
    /// PC at the true `r`, screening, strengths and rotation diagnostics.
    Estimate,
}

impl Task {
    pub const ALL: [Task; 5] = [
        Task::Count(Method::Svt),
        Task::Count(Method::IcP1),
        Task::Count(Method::Ed),
        Task::Count(Method::Ah),
        Task::Estimate,
    ];
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Count(m) => write!(f, "{m}"),
            Task::Estimate => f.write_str("pc"),
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("pc") {
            Ok(Task::Estimate)
        } else {
            s.parse().map(Task::Count)
        }
    }
}

impl TryFrom<String> for Task {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Task> for String {
    fn from(t: Task) -> String {
        t.to_string()
    }
}

/// Parses a comma-separated task list such as `wz,bn,pc`.
pub fn parse_tasks(list: &str) -> Result<Vec<Task>> {
    let mut tasks = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<Vec<Task>>>()?;
    if tasks.is_empty() {
        return Err(Error::InvalidArgument("empty task list".into()));
    }
    tasks.sort_unstable();
    tasks.dedup();
    Ok(tasks)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationOptions {
    pub rmax: usize,
    /// Screening multiplier `c` in `c / √ln(NT)`.
    pub c: f64,
    /// Worker threads; `0` lets the thread pool pick.
    #[serde(skip)]
    pub workers: usize,
}

impl Default for ReplicationOptions {
    fn default() -> Self {
        ReplicationOptions {
            rmax: DEFAULT_RMAX,
            c: 1.0,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationRecord {
    pub tr_f: f64,
    pub tr_lambda: f64,
    pub rmse_c: f64,
    pub fdp: Vec<f64>,
    pub power: Vec<f64>,
    pub fdp_overall: f64,
    pub power_overall: f64,
    pub alpha_hat: Vec<f64>,
    /// `|L⁰_k △ L̂_k| / N^{α_k}` per factor.
    pub symm_diff: Vec<f64>,
    /// Rows of `Q = F̃′F⁰/T`.
    pub q_matrix: Vec<Vec<f64>>,
    pub q_min_singular: f64,
    /// Leading `r` eigenvalues of `X′X/(NT)`.
    pub eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub index: usize,
    pub seed: u64,
    pub r_hat: BTreeMap<Method, usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimation: Option<EstimationRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn run_one(
    config: &SimConfig,
    index: usize,
    tasks: &[Task],
    opts: &ReplicationOptions,
) -> RepRecord {
    let seed = derive_seed(config.seed, index as u64);
    let mut rec = RepRecord {
        index,
        seed,
        r_hat: BTreeMap::new(),
        estimation: None,
        error: None,
    };
    if let Err(e) = fill_record(&config.with_seed(seed), tasks, opts, &mut rec) {
        rec.error = Some(e.to_string());
    }
    rec
}

fn fill_record(
    config: &SimConfig,
    tasks: &[Task],
    opts: &ReplicationOptions,
    rec: &mut RepRecord,
) -> Result<()> {
    let (panel, truth) = simulate_panel(config)?;
    let model = PcModel::from_matrix(panel.values())?;
    let counter = FactorCounter::from_model(model);
    for task in tasks {
        match *task {
            Task::Count(m) => {
                rec.r_hat.insert(m, counter.select(m, opts.rmax)?.r_hat);
            }
            Task::Estimate => {
                rec.estimation = Some(estimate(config, counter.model(), &truth, opts.c)?);
            }
        }
    }
    Ok(())
}

fn estimate(
    config: &SimConfig,
    model: &PcModel<'_>,
    truth: &crate::simulate::SimTruth,
    c: f64,
) -> Result<EstimationRecord> {
    let r = config.r;
    let n = config.n;
    let fit = model.fit(r)?;
    let sparse = screen_with_multiplier(&fit, c)?;
    let est = strengths(&sparse, n)?;

    let counts: Vec<SupportCounts> = truth
        .supports0
        .iter()
        .zip(&sparse.supports)
        .map(|(s, e)| SupportCounts::new(s, e))
        .collect();
    let pooled = counts.iter().fold(SupportCounts::default(), |a, &b| a + b);
    let symm_diff = (0..r)
        .map(|k| symm_diff_ratio(&truth.supports0[k], &sparse.supports[k], config.alpha[k], n))
        .collect();
    let q = rotation_q(&fit.factors, &truth.f0)?;
    let q_min_singular = singular_values(&q)?.last().copied().unwrap_or(0.0);

    Ok(EstimationRecord {
        tr_f: trace_stat_f(&truth.f0, &fit.factors)?,
        tr_lambda: trace_stat_lambda(&truth.lambda0_panel_scale(), &fit.loadings)?,
        rmse_c: rmse_c(&truth.c0_panel_scale(), &fit.common)?,
        fdp: counts.iter().map(SupportCounts::fdp).collect(),
        power: counts.iter().map(SupportCounts::power).collect(),
        fdp_overall: pooled.fdp(),
        power_overall: pooled.power(),
        alpha_hat: est.alpha_hat,
        symm_diff,
        q_matrix: rows(&q),
        q_min_singular,
        eigenvalues: fit.eigvals.to_vec(),
    })
}

fn rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Bias and RMSE of an estimator over the replications where it succeeded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub bias: f64,
    pub rmse: f64,
    pub count: usize,
}

impl ErrorStats {
    pub fn from_errors(errors: impl IntoIterator<Item = f64>) -> Option<Self> {
        let (mut sum, mut sq, mut count) = (0.0, 0.0, 0usize);
        for e in errors {
            sum += e;
            sq += e * e;
            count += 1;
        }
        (count > 0).then(|| ErrorStats {
            bias: sum / count as f64,
            rmse: (sq / count as f64).sqrt(),
            count,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimationSummary {
    /// Replications contributing to this summary.
    pub count: usize,
    pub tr_f: f64,
    pub tr_lambda: f64,
    pub rmse_c: f64,
    pub fdr: Vec<f64>,
    pub power: Vec<f64>,
    pub fdr_overall: f64,
    pub power_overall: f64,
    pub alpha_bias: Vec<f64>,
    pub alpha_rmse: Vec<f64>,
    pub median_symm_diff: Vec<f64>,
    /// Elementwise median of `|Q|`.
    pub median_abs_q: Vec<Vec<f64>>,
    /// Share of replications with smallest singular value of `Q` above 0.05.
    pub q_full_rank_share: f64,
    pub median_eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub failed: Vec<usize>,
    pub r_hat: BTreeMap<Method, ErrorStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimation: Option<EstimationSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub config: SimConfig,
    pub reps: usize,
    pub tasks: Vec<Task>,
    pub options: ReplicationOptions,
    pub per_rep: Vec<RepRecord>,
    pub aggregates: Aggregates,
}

/// Sample median; the mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    s / c as f64
}

fn summarize(config: &SimConfig, recs: &[&EstimationRecord]) -> Option<EstimationSummary> {
    if recs.is_empty() {
        return None;
    }
    let r = config.r;
    let col = |f: &dyn Fn(&EstimationRecord) -> f64| mean(recs.iter().map(|e| f(e)));
    let per_factor = |f: &dyn Fn(&EstimationRecord, usize) -> f64| -> Vec<f64> {
        (0..r).map(|k| mean(recs.iter().map(|e| f(e, k)))).collect()
    };
    let alpha_stats: Vec<ErrorStats> = (0..r)
        .map(|k| {
            ErrorStats::from_errors(recs.iter().map(|e| e.alpha_hat[k] - config.alpha[k]))
                .expect("nonempty")
        })
        .collect();
    let median_abs_q = (0..r)
        .map(|l| {
            (0..r)
                .map(|k| median(&recs.iter().map(|e| e.q_matrix[l][k].abs()).collect::<Vec<_>>()))
                .collect()
        })
        .collect();
    Some(EstimationSummary {
        count: recs.len(),
        tr_f: col(&|e| e.tr_f),
        tr_lambda: col(&|e| e.tr_lambda),
        rmse_c: col(&|e| e.rmse_c),
        fdr: per_factor(&|e, k| e.fdp[k]),
        power: per_factor(&|e, k| e.power[k]),
        fdr_overall: col(&|e| e.fdp_overall),
        power_overall: col(&|e| e.power_overall),
        alpha_bias: alpha_stats.iter().map(|s| s.bias).collect(),
        alpha_rmse: alpha_stats.iter().map(|s| s.rmse).collect(),
        median_symm_diff: (0..r)
            .map(|k| median(&recs.iter().map(|e| e.symm_diff[k]).collect::<Vec<_>>()))
            .collect(),
        median_abs_q,
        q_full_rank_share: col(&|e| if e.q_min_singular > 0.05 { 1.0 } else { 0.0 }),
        median_eigenvalues: (0..r)
            .map(|k| median(&recs.iter().map(|e| e.eigenvalues[k]).collect::<Vec<_>>()))
            .collect(),
    })
}

/// Aggregates per-replication records; a pure function of `per_rep`.
pub fn aggregate(config: &SimConfig, per_rep: &[RepRecord]) -> Aggregates {
    let failed = per_rep
        .iter()
        .filter(|r| r.error.is_some())
        .map(|r| r.index)
        .collect();
    let mut r_hat = BTreeMap::new();
    let methods: std::collections::BTreeSet<Method> =
        per_rep.iter().flat_map(|r| r.r_hat.keys().copied()).collect();
    for m in methods {
        let errs = per_rep
            .iter()
            .filter(|r| r.error.is_none())
            .filter_map(|r| r.r_hat.get(&m))
            .map(|&k| k as f64 - config.r as f64);
        if let Some(stats) = ErrorStats::from_errors(errs) {
            r_hat.insert(m, stats);
        }
    }
    let est: Vec<&EstimationRecord> = per_rep
        .iter()
        .filter(|r| r.error.is_none())
        .filter_map(|r| r.estimation.as_ref())
        .collect();
    Aggregates {
        failed,
        r_hat,
        estimation: summarize(config, &est),
    }
}

/// Runs `f` on a dedicated pool of `workers` threads (`0` = one per core),
/// so parallel iterators inside `f` use exactly that many.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs `reps` replications of the design in `config`.
pub fn run_replications(
    config: &SimConfig,
    reps: usize,
    tasks: &[Task],
    opts: &ReplicationOptions,
) -> Result<MetricsReport> {
    config.validate()?;
    if reps == 0 {
        return Err(Error::InvalidArgument("at least one replication is required".into()));
    }
    let mut tasks = tasks.to_vec();
    tasks.sort_unstable();
    tasks.dedup();
    let per_rep: Vec<RepRecord> = with_workers(opts.workers, || {
        (0..reps)
            .into_par_iter()
            .map(|i| run_one(config, i, &tasks, opts))
            .collect()
    })?;
    for rec in &per_rep {
        if let Some(e) = &rec.error {
            log::warn!("replication {} failed: {e}", rec.index);
        }
    }
    let aggregates = aggregate(config, &per_rep);
    Ok(MetricsReport {
        config: config.clone(),
        reps,
        tasks,
        options: opts.clone(),
        per_rep,
        aggregates,
    })
}

impl MetricsReport {
    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_default()
}

fn grid_writer<W: Write>(w: W, header: Vec<String>) -> Result<csv::Writer<W>> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(&header)?;
    Ok(out)
}

/// Factor-count table: one row per `(N, T)`, RMSE columns then bias
/// columns, one per method. Missing cells stay empty.
pub fn write_count_table<W: Write>(w: W, reports: &[MetricsReport], methods: &[Method]) -> Result<()> {
    let mut header = vec!["N".to_string(), "T".to_string()];
    header.extend(methods.iter().map(|m| format!("rmse_{m}")));
    header.extend(methods.iter().map(|m| format!("bias_{m}")));
    let mut out = grid_writer(w, header)?;
    for rep in reports {
        let stats = &rep.aggregates.r_hat;
        let mut row = vec![rep.config.n.to_string(), rep.config.t.to_string()];
        row.extend(methods.iter().map(|m| fmt_opt(stats.get(m).map(|s| s.rmse))));
        row.extend(methods.iter().map(|m| fmt_opt(stats.get(m).map(|s| s.bias))));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Estimation-quality table: `TR^F`, `TR^Λ`, `RMSE^C` per `(N, T)`.
pub fn write_quality_table<W: Write>(w: W, reports: &[MetricsReport]) -> Result<()> {
    let header = ["N", "T", "tr_f", "tr_lambda", "rmse_c"].map(String::from).to_vec();
    let mut out = grid_writer(w, header)?;
    for rep in reports {
        let e = rep.aggregates.estimation.as_ref();
        out.write_record([
            rep.config.n.to_string(),
            rep.config.t.to_string(),
            fmt_opt(e.map(|e| e.tr_f)),
            fmt_opt(e.map(|e| e.tr_lambda)),
            fmt_opt(e.map(|e| e.rmse_c)),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn factor_cols(r: usize, prefix: &str) -> impl Iterator<Item = String> + '_ {
    (1..=r).map(move |k| format!("{prefix}_{k}"))
}

fn max_r(reports: &[MetricsReport]) -> usize {
    reports.iter().map(|r| r.config.r).max().unwrap_or(0)
}

/// Support-recovery table: `FDR_1..r`, pooled FDR, `Power_1..r`, pooled power.
pub fn write_support_table<W: Write>(w: W, reports: &[MetricsReport]) -> Result<()> {
    let r = max_r(reports);
    let mut header = vec!["N".to_string(), "T".to_string()];
    header.extend(factor_cols(r, "fdr"));
    header.push("fdr_overall".into());
    header.extend(factor_cols(r, "power"));
    header.push("power_overall".into());
    let mut out = grid_writer(w, header)?;
    for rep in reports {
        let e = rep.aggregates.estimation.as_ref();
        let pick = |f: &dyn Fn(&EstimationSummary) -> &Vec<f64>, k: usize| {
            fmt_opt(e.and_then(|e| f(e).get(k).copied()))
        };
        let mut row = vec![rep.config.n.to_string(), rep.config.t.to_string()];
        row.extend((0..r).map(|k| pick(&|e| &e.fdr, k)));
        row.push(fmt_opt(e.map(|e| e.fdr_overall)));
        row.extend((0..r).map(|k| pick(&|e| &e.power, k)));
        row.push(fmt_opt(e.map(|e| e.power_overall)));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Strength table: RMSE of `α̂_1..r`, then their biases.
pub fn write_strength_table<W: Write>(w: W, reports: &[MetricsReport]) -> Result<()> {
    let r = max_r(reports);
    let mut header = vec!["N".to_string(), "T".to_string()];
    header.extend(factor_cols(r, "rmse_alpha"));
    header.extend(factor_cols(r, "bias_alpha"));
    let mut out = grid_writer(w, header)?;
    for rep in reports {
        let e = rep.aggregates.estimation.as_ref();
        let mut row = vec![rep.config.n.to_string(), rep.config.t.to_string()];
        row.extend((0..r).map(|k| fmt_opt(e.and_then(|e| e.alpha_rmse.get(k).copied()))));
        row.extend((0..r).map(|k| fmt_opt(e.and_then(|e| e.alpha_bias.get(k).copied()))));
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}
