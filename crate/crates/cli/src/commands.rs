use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use log::warn;
use serde::de::DeserializeOwned;

use weakfactor::factor_count::{FactorCounter, Method, DEFAULT_RMAX};
use weakfactor::panel::{align_and_trim, ingest_csv, standardize};
use weakfactor::replicate::{
    parse_tasks, run_replications, with_workers, write_count_table, write_quality_table, write_strength_table,
    write_support_table, ReplicationOptions, Task,
};
use weakfactor::rolling::{rolling_analysis, subperiod_heatmap, DEFAULT_WINDOW};
use weakfactor::simulate::{derive_seed, simulate_panel, SimConfig, SupportMode, DEFAULT_BURN_IN};
use weakfactor::sparsity::{screen_with_multiplier, strengths, SparseSummary};
use weakfactor::{Panel, PcModel};

use crate::args::*;
use crate::output::OutDir;
use crate::CliError;

const DEFAULT_REPS: usize = 100;

fn user(msg: impl Into<String>) -> CliError {
    CliError::User(msg.into())
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| user(format!("missing required option --{flag}")))
}

fn read_config<T: DeserializeOwned>(path: &Option<PathBuf>) -> Result<Option<T>, CliError> {
    let Some(path) = path else { return Ok(None) };
    let file = File::open(path).map_err(|e| user(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(file))
        .map(Some)
        .map_err(|e| user(format!("invalid config {}: {e}", path.display())))
}

/// Reads a panel and applies its transformation codes when it has them.
fn load_panel(data: &Option<PathBuf>, layout: Layout) -> Result<Panel, CliError> {
    let path = required(data.as_ref(), "data")?;
    let file = File::open(path).map_err(|e| user(format!("cannot read {}: {e}", path.display())))?;
    let ingested = ingest_csv(BufReader::new(file), layout.into())
        .map_err(|e| user(format!("{}: {e}", path.display())))?;
    for d in &ingested.dropped {
        warn!("dropped series {}: {}", d.name, d.reason);
    }
    Ok(match &ingested.tcodes {
        Some(codes) => align_and_trim(&ingested.panel, codes)?,
        None => ingested.panel,
    })
}

fn parse_methods(list: &[String]) -> Result<Vec<Method>, CliError> {
    let mut methods = list
        .iter()
        .map(|s| s.trim().parse::<Method>())
        .collect::<Result<Vec<_>, _>>()?;
    methods.sort_unstable();
    methods.dedup();
    if methods.is_empty() {
        return Err(user("empty method list"));
    }
    Ok(methods)
}

fn parse_grid(cells: &[String]) -> Result<Vec<(usize, usize)>, CliError> {
    cells
        .iter()
        .map(|cell| {
            let (n, t) = cell
                .split_once(['x', 'X'])
                .ok_or_else(|| user(format!("grid cell {cell:?} is not of the form NxT")))?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| user(format!("grid cell {cell:?} is not of the form NxT")))
            };
            Ok((parse(n)?, parse(t)?))
        })
        .collect()
}

pub fn simulate(mut a: SimulateArgs) -> Result<(), CliError> {
    if let Some(file) = read_config::<SimulateArgs>(&a.config)? {
        a.overlay(file);
    }
    let out_path = required(a.out.clone(), "out")?;
    let seed = *a.seed.get_or_insert_with(rand::random);
    let alpha = required(a.alpha.clone(), "alpha")?;
    let cells = match &a.grid {
        Some(g) => parse_grid(g)?,
        None => vec![(required(a.n, "n")?, required(a.t, "t")?)],
    };
    let reps = *a.reps.get_or_insert(DEFAULT_REPS);
    let methods = a
        .methods
        .get_or_insert_with(|| Task::ALL.iter().map(Task::to_string).collect())
        .clone();
    let tasks = parse_tasks(&methods.join(","))?;
    let opts = ReplicationOptions {
        rmax: *a.rmax.get_or_insert(DEFAULT_RMAX),
        c: *a.c.get_or_insert(1.0),
        workers: *a.workers.get_or_insert(0),
    };
    let burn_in = *a.burn_in.get_or_insert(DEFAULT_BURN_IN);
    let error_scale = *a.error_scale.get_or_insert(1.0);
    let std = *a.standardize.get_or_insert(false);
    let write_panel = *a.write_panel.get_or_insert(false);

    let configs: Vec<SimConfig> = cells
        .iter()
        .map(|&(n, t)| {
            let mut cfg = SimConfig::new(n, t, alpha.clone(), seed);
            cfg.burn_in = burn_in;
            cfg.error_scale = error_scale;
            cfg.correlated_blocks = a.correlated_blocks;
            cfg.standardize = std;
            if let Some(ranges) = &a.contiguous_ranges {
                cfg.support_mode = SupportMode::Contiguous;
                cfg.contiguous_ranges = Some(ranges.clone());
            }
            cfg
        })
        .collect();
    let reports = configs
        .iter()
        .map(|cfg| run_replications(cfg, reps, &tasks, &opts))
        .collect::<Result<Vec<_>, _>>()?;

    let mut out = OutDir::create(&out_path)?;
    out.write_json("report.json", &reports)?;
    let count_methods: Vec<Method> = tasks
        .iter()
        .filter_map(|t| match t {
            Task::Count(m) => Some(*m),
            Task::Estimate => None,
        })
        .collect();
    if !count_methods.is_empty() {
        out.write("factor_counts.csv", |w| Ok(write_count_table(w, &reports, &count_methods)?))?;
    }
    if tasks.contains(&Task::Estimate) {
        out.write("estimation_quality.csv", |w| Ok(write_quality_table(w, &reports)?))?;
        out.write("support_recovery.csv", |w| Ok(write_support_table(w, &reports)?))?;
        out.write("strengths.csv", |w| Ok(write_strength_table(w, &reports)?))?;
    }
    if write_panel {
        let (panel, _) = simulate_panel(&configs[0].with_seed(derive_seed(seed, 0)))?;
        out.write("panel.csv", |w| Ok(panel.write_csv(w)?))?;
    }
    out.finish("simulate", &a, Some(seed))
}

fn standardized_input(data: &Option<PathBuf>, layout: Layout) -> Result<Panel, CliError> {
    Ok(standardize(&load_panel(data, layout)?)?)
}

fn resolve_r(model: &PcModel<'_>, r: &mut Option<usize>, rmax: usize) -> Result<usize, CliError> {
    match *r {
        Some(r) => Ok(r),
        None => {
            let chosen = FactorCounter::from_model(model.clone()).svt(rmax)?.r_hat;
            if chosen == 0 {
                return Err(user("no factors selected; pass --r to force a fit"));
            }
            *r = Some(chosen);
            Ok(chosen)
        }
    }
}

pub fn estimate(mut a: EstimateArgs) -> Result<(), CliError> {
    if let Some(file) = read_config::<EstimateArgs>(&a.config)? {
        a.overlay(file);
    }
    let out_path = required(a.out.clone(), "out")?;
    let rmax = *a.rmax.get_or_insert(DEFAULT_RMAX);
    let panel = standardized_input(&a.data, *a.orientation.get_or_insert(Layout::Rows))?;
    let model = PcModel::new(&panel)?;
    let r = resolve_r(&model, &mut a.r, rmax)?;
    let fit = model.fit(r)?;
    let mut out = OutDir::create(&out_path)?;
    out.write("factors.csv", |w| Ok(fit.write_factors_csv(w, panel.time_ids())?))?;
    out.write("loadings.csv", |w| Ok(fit.write_loadings_csv(w, panel.series_ids())?))?;
    out.write("eigenvalues.csv", |w| Ok(fit.write_eigenvalues_csv(w)?))?;
    out.finish("estimate", &a, None)
}

pub fn select_r(mut a: SelectArgs) -> Result<(), CliError> {
    if let Some(file) = read_config::<SelectArgs>(&a.config)? {
        a.overlay(file);
    }
    let out_path = required(a.out.clone(), "out")?;
    let rmax = *a.rmax.get_or_insert(DEFAULT_RMAX);
    let names = a
        .methods
        .get_or_insert_with(|| Method::ALL.iter().map(Method::to_string).collect())
        .clone();
    let methods = parse_methods(&names)?;
    let panel = standardized_input(&a.data, *a.orientation.get_or_insert(Layout::Rows))?;
    let counter = FactorCounter::new(&panel)?;
    let results = methods
        .iter()
        .map(|&m| counter.select(m, rmax))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = OutDir::create(&out_path)?;
    out.write("r_hat.csv", |w| {
        let header: Vec<String> = methods.iter().map(Method::to_string).collect();
        writeln!(w, "{}", header.join(",")).map_err(|e| user(e.to_string()))?;
        let row: Vec<String> = results.iter().map(|r| r.r_hat.to_string()).collect();
        writeln!(w, "{}", row.join(",")).map_err(|e| user(e.to_string()))
    })?;
    out.write_json("diagnostics.json", &results)?;
    out.finish("select-r", &a, None)
}

pub fn strengths_cmd(mut a: StrengthsArgs) -> Result<(), CliError> {
    if let Some(file) = read_config::<StrengthsArgs>(&a.config)? {
        a.overlay(file);
    }
    let out_path = required(a.out.clone(), "out")?;
    let rmax = *a.rmax.get_or_insert(DEFAULT_RMAX);
    let c = *a.c.get_or_insert(1.0);
    let panel = standardized_input(&a.data, *a.orientation.get_or_insert(Layout::Rows))?;
    let model = PcModel::new(&panel)?;
    let r = resolve_r(&model, &mut a.r, rmax)?;
    let fit = model.fit(r)?;
    let sparse = screen_with_multiplier(&fit, c)?;
    let est = strengths(&sparse, panel.n())?;
    let mut out = OutDir::create(&out_path)?;
    out.write("sparse_loadings.csv", |w| Ok(sparse.write_csv(w, panel.series_ids())?))?;
    out.write("strengths.csv", |w| {
        let io = |e: std::io::Error| user(e.to_string());
        writeln!(w, "factor,count,alpha_hat,label").map_err(io)?;
        for k in 0..r {
            writeln!(w, "{},{},{},{}", k + 1, sparse.counts[k], est.alpha_hat[k], est.labels[k].as_str())
                .map_err(io)?;
        }
        Ok(())
    })?;
    out.write_json("strengths.json", &SparseSummary::new(&sparse, &est))?;
    out.finish("strengths", &a, None)
}

pub fn rolling(mut a: RollingArgs) -> Result<(), CliError> {
    if let Some(file) = read_config::<RollingArgs>(&a.config)? {
        a.overlay(file);
    }
    let out_path = required(a.out.clone(), "out")?;
    let window = *a.window.get_or_insert(DEFAULT_WINDOW);
    let rmax = *a.rmax.get_or_insert(DEFAULT_RMAX);
    let c = *a.c.get_or_insert(1.0);
    let workers = *a.workers.get_or_insert(0);
    let names = a.methods.get_or_insert_with(|| vec![Method::Svt.to_string()]).clone();
    let methods = parse_methods(&names)?;
    let panel = load_panel(&a.data, *a.orientation.get_or_insert(Layout::Rows))?;
    let result = with_workers(workers, || rolling_analysis(&panel, window, &methods, rmax, c))??;
    let mut out = OutDir::create(&out_path)?;
    out.write("rolling.csv", |w| Ok(result.write_csv(w)?))?;
    out.write_json("rolling.json", &result)?;
    out.finish("rolling", &a, None)
}

fn time_index(panel: &Panel, label: &str) -> Result<usize, CliError> {
    panel
        .time_ids()
        .iter()
        .position(|t| t == label)
        .ok_or_else(|| user(format!("period {label:?} not found in the data")))
}

pub fn heatmap(mut a: HeatmapArgs) -> Result<(), CliError> {
    if let Some(file) = read_config::<HeatmapArgs>(&a.config)? {
        a.overlay(file);
    }
    let out_path = required(a.out.clone(), "out")?;
    let rmax = *a.rmax.get_or_insert(DEFAULT_RMAX);
    let c = *a.c.get_or_insert(1.0);
    let panel = load_panel(&a.data, *a.orientation.get_or_insert(Layout::Rows))?;
    let start = match &a.from {
        Some(label) => time_index(&panel, label)?,
        None => 0,
    };
    let end = match &a.to {
        Some(label) => time_index(&panel, label)? + 1,
        None => panel.t(),
    };
    if start >= end {
        return Err(user("--from must come before --to"));
    }
    let export = subperiod_heatmap(&panel, start, end, rmax, a.r, c)?;
    let mut out = OutDir::create(&out_path)?;
    out.write("heatmap.csv", |w| Ok(export.write_csv(w)?))?;
    out.finish("heatmap", &a, None)
}
