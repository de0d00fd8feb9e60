//! Command-line grammar. Every subcommand also accepts `--config FILE`, a
//! JSON object with the same keys as the long flags (dashes become
//! underscores); flags given on the command line win.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use weakfactor::Orientation;

#[derive(Debug, Parser)]
#[command(name = "weakfactor", version, about = "Sparse weak factor models: estimation, factor counts, strengths, simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Monte Carlo replications of the sparse-loading design
    Simulate(SimulateArgs),
    /// Principal-component factors and loadings of a panel
    Estimate(EstimateArgs),
    /// Number of factors by several selection rules
    SelectR(SelectArgs),
    /// Screened loadings and factor strengths
    Strengths(StrengthsArgs),
    /// Factor counts and strengths over rolling windows
    Rolling(RollingArgs),
    /// Censored loading magnitudes for one subperiod
    Heatmap(HeatmapArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// One series per row, time labels in the header
    Rows,
    /// One series per column, time labels in the first column
    Columns,
}

impl From<Layout> for Orientation {
    fn from(l: Layout) -> Orientation {
        match l {
            Layout::Rows => Orientation::SeriesInRows,
            Layout::Columns => Orientation::SeriesInColumns,
        }
    }
}

/// Fills every `None` field of `$flags` from `$file`.
macro_rules! overlay {
    ($flags:expr, $file:expr; $($field:ident),+ $(,)?) => {
        $( if $flags.$field.is_none() { $flags.$field = $file.$field; } )+
    };
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateArgs {
    /// JSON file with default values for any option below
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Cross-section size
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of time periods
    #[arg(long)]
    pub t: Option<usize>,
    /// Several (N,T) cells, e.g. `100x100,200x200`; overrides --n/--t
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<String>>,
    /// Factor strengths, nonincreasing, e.g. `0.9,0.75,0.6`
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub alpha: Option<Vec<f64>>,
    /// Master seed; drawn at random and recorded when absent
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replications per cell
    #[arg(long)]
    pub reps: Option<usize>,
    /// Tasks: any of wz, bn, ed, ah (factor counts) and pc (estimation)
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long)]
    pub rmax: Option<usize>,
    /// Screening multiplier c in c/sqrt(ln NT)
    #[arg(long)]
    pub c: Option<f64>,
    /// Worker threads (0 = all cores)
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Multiplier on the idiosyncratic errors
    #[arg(long)]
    pub error_scale: Option<f64>,
    /// Number of correlated 4x4 error blocks (default floor(N^0.3))
    #[arg(long)]
    pub correlated_blocks: Option<usize>,
    /// Standardize each simulated series before estimation
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub standardize: Option<bool>,
    /// Also write the first replication's panel as panel.csv
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub write_panel: Option<bool>,
    /// One-based inclusive support ranges per factor (config file only)
    #[arg(skip)]
    pub contiguous_ranges: Option<Vec<[usize; 2]>>,
}

impl SimulateArgs {
    pub fn overlay(&mut self, file: SimulateArgs) {
        overlay!(self, file; out, n, t, grid, alpha, seed, reps, methods, rmax, c, workers,
            burn_in, error_scale, correlated_blocks, standardize, write_panel, contiguous_ranges);
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Input panel CSV
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub orientation: Option<Layout>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Number of factors; selected by singular value thresholding when absent
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long)]
    pub rmax: Option<usize>,
}

impl EstimateArgs {
    pub fn overlay(&mut self, file: EstimateArgs) {
        overlay!(self, file; data, orientation, out, r, rmax);
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub orientation: Option<Layout>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub rmax: Option<usize>,
    /// Selection rules: any of wz, bn, ed, ah
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
}

impl SelectArgs {
    pub fn overlay(&mut self, file: SelectArgs) {
        overlay!(self, file; data, orientation, out, rmax, methods);
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrengthsArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub orientation: Option<Layout>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long)]
    pub rmax: Option<usize>,
    #[arg(long)]
    pub c: Option<f64>,
}

impl StrengthsArgs {
    pub fn overlay(&mut self, file: StrengthsArgs) {
        overlay!(self, file; data, orientation, out, r, rmax, c);
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RollingArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub orientation: Option<Layout>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Window length in periods
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub rmax: Option<usize>,
    #[arg(long)]
    pub c: Option<f64>,
    /// Selection rules reported per window (wz always drives the strengths)
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long)]
    pub workers: Option<usize>,
}

impl RollingArgs {
    pub fn overlay(&mut self, file: RollingArgs) {
        overlay!(self, file; data, orientation, out, window, rmax, c, methods, workers);
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatmapArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub orientation: Option<Layout>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// First period label of the subperiod (default: first in the data)
    #[arg(long)]
    pub from: Option<String>,
    /// Last period label of the subperiod, inclusive (default: last)
    #[arg(long)]
    pub to: Option<String>,
    #[arg(long)]
    pub r: Option<usize>,
    #[arg(long)]
    pub rmax: Option<usize>,
    #[arg(long)]
    pub c: Option<f64>,
}

impl HeatmapArgs {
    pub fn overlay(&mut self, file: HeatmapArgs) {
        overlay!(self, file; data, orientation, out, from, to, r, rmax, c);
    }
}
