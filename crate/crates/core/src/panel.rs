//! Panel data: an `N×T` matrix of observations (rows are cross-sectional
//! units, columns are time periods) with labels, CSV ingestion, FRED-QD
//! style transformation codes, and row standardization.

use std::collections::HashSet;
use std::io::{Read, Write};

use ndarray::{s, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-mean tolerance for the standardized invariant.
pub const STANDARDIZED_MEAN_TOL: f64 = 1e-10;
/// Row-variance tolerance for the standardized invariant.
pub const STANDARDIZED_VAR_TOL: f64 = 1e-8;
/// Shortest sample accepted after [`align_and_trim`].
pub const MIN_TRIMMED_LEN: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    values: Array2<f64>,
    series_ids: Vec<String>,
    group_ids: Option<Vec<u8>>,
    time_ids: Vec<String>,
    standardized: bool,
}

impl Panel {
    /// Builds a panel after checking label lengths and finiteness. The
    /// `standardized` flag starts out false; use [`standardize`] to set it.
    pub fn new(values: Array2<f64>, series_ids: Vec<String>, time_ids: Vec<String>) -> Result<Self> {
        let (n, t) = values.dim();
        if series_ids.len() != n {
            return Err(Error::Dimension(format!(
                "{} series labels for {} rows",
                series_ids.len(),
                n
            )));
        }
        if time_ids.len() != t {
            return Err(Error::Dimension(format!(
                "{} time labels for {} columns",
                time_ids.len(),
                t
            )));
        }
        if let Some(((i, j), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "series `{}` at time `{}`",
                series_ids[i], time_ids[j]
            )));
        }
        Ok(Panel {
            values,
            series_ids,
            group_ids: None,
            time_ids,
            standardized: false,
        })
    }

    /// Panel with generated labels `s1..sN` and `1..T`.
    pub fn from_matrix(values: Array2<f64>) -> Result<Self> {
        let (n, t) = values.dim();
        let series = (1..=n).map(|i| format!("s{i}")).collect();
        let times = (1..=t).map(|j| j.to_string()).collect();
        Panel::new(values, series, times)
    }

    pub fn with_groups(mut self, groups: Vec<u8>) -> Result<Self> {
        if groups.len() != self.n() {
            return Err(Error::Dimension(format!(
                "{} group ids for {} series",
                groups.len(),
                self.n()
            )));
        }
        self.group_ids = Some(groups);
        Ok(self)
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn series_ids(&self) -> &[String] {
        &self.series_ids
    }

    pub fn group_ids(&self) -> Option<&[u8]> {
        self.group_ids.as_deref()
    }

    pub fn time_ids(&self) -> &[String] {
        &self.time_ids
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    /// Number of cross-sectional units.
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Number of time periods.
    pub fn t(&self) -> usize {
        self.values.ncols()
    }

    /// Columns `start..end` as a new panel. The standardized flag is cleared
    /// since a sub-window of a standardized panel is not itself standardized.
    pub fn time_slice(&self, start: usize, end: usize) -> Result<Panel> {
        if start >= end || end > self.t() {
            return Err(Error::InvalidArgument(format!(
                "time range {start}..{end} outside 0..{}",
                self.t()
            )));
        }
        Ok(Panel {
            values: self.values.slice(s![.., start..end]).to_owned(),
            series_ids: self.series_ids.clone(),
            group_ids: self.group_ids.clone(),
            time_ids: self.time_ids[start..end].to_vec(),
            standardized: false,
        })
    }

    /// Every row has mean zero and unit sample variance within tolerance.
    pub fn check_standardized(&self) -> bool {
        let t = self.t();
        if t < 2 {
            return false;
        }
        self.values.rows().into_iter().all(|row| {
            let mean = row.sum() / t as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1) as f64;
            mean.abs() < STANDARDIZED_MEAN_TOL && (var - 1.0).abs() < STANDARDIZED_VAR_TOL
        })
    }

    /// Writes the panel in series-in-rows layout. Values use the shortest
    /// representation that parses back to the same `f64`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["series".to_string()];
        if self.group_ids.is_some() {
            header.push("group".to_string());
        }
        header.extend(self.time_ids.iter().cloned());
        w.write_record(&header)?;
        for (i, row) in self.values.rows().into_iter().enumerate() {
            let mut rec = vec![self.series_ids[i].clone()];
            if let Some(g) = &self.group_ids {
                rec.push(g[i].to_string());
            }
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Layout of an input CSV file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// First row holds series names, first column holds time labels.
    SeriesInColumns,
    /// First row holds time labels, first column holds series names.
    #[default]
    SeriesInRows,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroppedSeries {
    pub name: String,
    pub reason: String,
}

/// Result of [`ingest_csv`].
#[derive(Debug, Clone)]
pub struct Ingested {
    pub panel: Panel,
    pub dropped: Vec<DroppedSeries>,
    /// Transformation codes from a `transform` row/column, aligned with the
    /// surviving series.
    pub tcodes: Option<Vec<TransformCode>>,
}

struct RawSeries {
    name: String,
    group: Option<u8>,
    tcode: Option<TransformCode>,
    cells: Vec<String>,
}

/// Reads a panel from CSV.
///
/// In series-in-rows layout the header is `name[,group][,transform],t1,...`
/// and each following line is one series. In series-in-columns layout the
/// header is `time,name1,...`; lines whose first cell is `group` or
/// `transform` (FRED-QD's `factors`/`transform` rows) carry metadata.
///
/// Series with any empty or unparseable data cell are dropped and listed in
/// [`Ingested::dropped`].
pub fn ingest_csv<R: Read>(source: R, orientation: Orientation) -> Result<Ingested> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let mut rows: Vec<Vec<String>> = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        rows.push(rec.iter().map(str::to_string).collect());
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: "empty file".into(),
        });
    }
    let (raw, time_ids) = match orientation {
        Orientation::SeriesInRows => split_rows(&rows)?,
        Orientation::SeriesInColumns => split_columns(&rows)?,
    };
    if time_ids.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: format!("need at least 2 time points, found {}", time_ids.len()),
        });
    }

    let mut seen = HashSet::new();
    for s in &raw {
        if !seen.insert(s.name.as_str()) {
            return Err(Error::DuplicateSeries(s.name.clone()));
        }
    }

    let t = time_ids.len();
    let mut kept_values = Vec::new();
    let mut names = Vec::new();
    let mut groups = Vec::new();
    let mut tcodes = Vec::new();
    let mut dropped = Vec::new();
    for s in raw {
        let mut row = Vec::with_capacity(t);
        let mut reason = None;
        for j in 0..t {
            let cell = s.cells.get(j).map(String::as_str).unwrap_or("");
            if cell.is_empty() {
                reason = Some(format!("missing value at time `{}`", time_ids[j]));
                break;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    reason = Some(format!("unparseable value `{cell}` at time `{}`", time_ids[j]));
                    break;
                }
            }
        }
        match reason {
            Some(reason) => dropped.push(DroppedSeries { name: s.name, reason }),
            None => {
                kept_values.extend(row);
                names.push(s.name);
                groups.push(s.group);
                tcodes.push(s.tcode);
            }
        }
    }

    let n = names.len();
    let values = Array2::from_shape_vec((n, t), kept_values)
        .map_err(|e| Error::Dimension(e.to_string()))?;
    let mut panel = Panel::new(values, names, time_ids)?;
    if groups.iter().all(Option::is_some) && n > 0 && groups[0].is_some() {
        panel = panel.with_groups(groups.into_iter().flatten().collect())?;
    }
    let tcodes = if n > 0 && tcodes.iter().all(Option::is_some) {
        Some(tcodes.into_iter().flatten().collect())
    } else {
        None
    };
    Ok(Ingested {
        panel,
        dropped,
        tcodes,
    })
}

fn parse_group(cell: &str, line: usize, column: usize) -> Result<u8> {
    cell.parse::<u8>().map_err(|_| Error::Parse {
        line,
        column,
        message: format!("invalid group id `{cell}`"),
    })
}

fn parse_tcode(cell: &str, line: usize, column: usize) -> Result<TransformCode> {
    let parsed = cell
        .parse::<f64>()
        .ok()
        .filter(|v| v.fract() == 0.0 && (1.0..=7.0).contains(v));
    match parsed {
        Some(v) => TransformCode::new(v as u8),
        None => Err(Error::Parse {
            line,
            column,
            message: format!("invalid transformation code `{cell}`"),
        }),
    }
}

fn split_rows(rows: &[Vec<String>]) -> Result<(Vec<RawSeries>, Vec<String>)> {
    let header = &rows[0];
    let mut col = 1;
    let has_group = header.get(col).is_some_and(|h| h.eq_ignore_ascii_case("group"));
    if has_group {
        col += 1;
    }
    let has_tcode = header.get(col).is_some_and(|h| h.eq_ignore_ascii_case("transform"));
    if has_tcode {
        col += 1;
    }
    let data_start = col;
    let time_ids: Vec<String> = header[data_start..].to_vec();
    let mut out = Vec::new();
    for (idx, row) in rows.iter().enumerate().skip(1) {
        let line = idx + 1;
        let name = row.first().cloned().unwrap_or_default();
        if name.is_empty() {
            return Err(Error::Parse {
                line,
                column: 1,
                message: "missing series name".into(),
            });
        }
        let group = if has_group {
            Some(parse_group(row.get(1).map(String::as_str).unwrap_or(""), line, 2)?)
        } else {
            None
        };
        let tcode = if has_tcode {
            let c = data_start;
            Some(parse_tcode(row.get(c - 1).map(String::as_str).unwrap_or(""), line, c)?)
        } else {
            None
        };
        if row.len() > data_start + time_ids.len() {
            return Err(Error::Parse {
                line,
                column: data_start + time_ids.len() + 1,
                message: format!("row has {} cells, header has {}", row.len(), header.len()),
            });
        }
        out.push(RawSeries {
            name,
            group,
            tcode,
            cells: row.get(data_start..).map(<[String]>::to_vec).unwrap_or_default(),
        });
    }
    Ok((out, time_ids))
}

fn split_columns(rows: &[Vec<String>]) -> Result<(Vec<RawSeries>, Vec<String>)> {
    let header = &rows[0];
    let names: Vec<String> = header[1..].to_vec();
    if let Some(pos) = names.iter().position(String::is_empty) {
        return Err(Error::Parse {
            line: 1,
            column: pos + 2,
            message: "missing series name".into(),
        });
    }
    let mut groups: Option<Vec<u8>> = None;
    let mut tcodes: Option<Vec<TransformCode>> = None;
    let mut time_ids = Vec::new();
    let mut columns: Vec<Vec<String>> = vec![Vec::new(); names.len()];
    let mut seen_data = false;
    for (idx, row) in rows.iter().enumerate().skip(1) {
        let line = idx + 1;
        let label = row.first().cloned().unwrap_or_default();
        if row.len() > header.len() {
            return Err(Error::Parse {
                line,
                column: header.len() + 1,
                message: format!("row has {} cells, header has {}", row.len(), header.len()),
            });
        }
        let cell = |j: usize| row.get(j + 1).map(String::as_str).unwrap_or("");
        if !seen_data && label.eq_ignore_ascii_case("group") {
            groups = Some(
                (0..names.len())
                    .map(|j| parse_group(cell(j), line, j + 2))
                    .collect::<Result<_>>()?,
            );
            continue;
        }
        if !seen_data && label.eq_ignore_ascii_case("transform") {
            tcodes = Some(
                (0..names.len())
                    .map(|j| parse_tcode(cell(j), line, j + 2))
                    .collect::<Result<_>>()?,
            );
            continue;
        }
        if label.is_empty() {
            return Err(Error::Parse {
                line,
                column: 1,
                message: "missing time label".into(),
            });
        }
        seen_data = true;
        time_ids.push(label);
        for (j, col) in columns.iter_mut().enumerate() {
            col.push(cell(j).to_string());
        }
    }
    let series = names
        .into_iter()
        .zip(columns)
        .enumerate()
        .map(|(j, (name, cells))| RawSeries {
            name,
            group: groups.as_ref().map(|g| g[j]),
            tcode: tcodes.as_ref().map(|c| c[j]),
            cells,
        })
        .collect();
    Ok((series, time_ids))
}

/// FRED-QD transformation code.
///
/// | code | transform                     | observations lost |
/// |------|-------------------------------|-------------------|
/// | 1    | level                         | 0 |
/// | 2    | Δx                            | 1 |
/// | 3    | Δ²x                           | 2 |
/// | 4    | ln x                          | 0 |
/// | 5    | Δ ln x                        | 1 |
/// | 6    | Δ² ln x                       | 2 |
/// | 7    | Δ(x_t / x_{t−1} − 1)          | 2 |
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct TransformCode(u8);

impl TransformCode {
    pub fn new(code: u8) -> Result<Self> {
        if (1..=7).contains(&code) {
            Ok(TransformCode(code))
        } else {
            Err(Error::InvalidArgument(format!(
                "transformation code {code} not in 1..=7"
            )))
        }
    }

    pub fn code(self) -> u8 {
        self.0
    }

    /// Number of leading observations consumed by differencing.
    pub fn order(self) -> usize {
        [0, 1, 2, 0, 1, 2, 2][self.0 as usize - 1]
    }

    fn needs_log_domain(self) -> bool {
        self.0 >= 4
    }
}

impl TryFrom<u8> for TransformCode {
    type Error = Error;

    fn try_from(code: u8) -> Result<Self> {
        TransformCode::new(code)
    }
}

impl From<TransformCode> for u8 {
    fn from(c: TransformCode) -> u8 {
        c.0
    }
}

fn diff(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Applies one transformation code to a series.
pub fn apply_tcode(series: &[f64], code: TransformCode) -> Result<Vec<f64>> {
    if series.len() < 3 {
        return Err(Error::InsufficientSample(format!(
            "series of length {} (need at least 3)",
            series.len()
        )));
    }
    if code.needs_log_domain() {
        if let Some(index) = series.iter().position(|&v| !(v > 0.0)) {
            return Err(Error::Domain {
                index,
                message: format!(
                    "code {} requires strictly positive values, found {}",
                    code.0, series[index]
                ),
            });
        }
    }
    let out = match code.0 {
        1 => series.to_vec(),
        2 => diff(series),
        3 => diff(&diff(series)),
        4 => series.iter().map(|v| v.ln()).collect(),
        5 => diff(&series.iter().map(|v| v.ln()).collect::<Vec<_>>()),
        6 => diff(&diff(&series.iter().map(|v| v.ln()).collect::<Vec<_>>())),
        7 => diff(
            &series
                .windows(2)
                .map(|w| w[1] / w[0] - 1.0)
                .collect::<Vec<_>>(),
        ),
        _ => unreachable!("validated by TransformCode::new"),
    };
    Ok(out)
}

/// Transforms every series and trims all of them to `T − 2` observations,
/// dropping leading points so the panel starts at a common date.
pub fn align_and_trim(panel: &Panel, codes: &[TransformCode]) -> Result<Panel> {
    align_and_trim_with_min(panel, codes, MIN_TRIMMED_LEN)
}

/// [`align_and_trim`] with an explicit minimum output length.
pub fn align_and_trim_with_min(
    panel: &Panel,
    codes: &[TransformCode],
    min_len: usize,
) -> Result<Panel> {
    if codes.len() != panel.n() {
        return Err(Error::Dimension(format!(
            "{} transformation codes for {} series",
            codes.len(),
            panel.n()
        )));
    }
    let t = panel.t();
    if t < 3 || t - 2 < min_len {
        return Err(Error::InsufficientSample(format!(
            "{} observations remain after trimming, need {min_len}",
            t.saturating_sub(2)
        )));
    }
    let out_len = t - 2;
    let mut values = Array2::zeros((panel.n(), out_len));
    for (i, (row, &code)) in panel.values.rows().into_iter().zip(codes).enumerate() {
        let transformed = apply_tcode(&row.to_vec(), code).map_err(|e| match e {
            Error::Domain { index, message } => Error::Domain {
                index,
                message: format!("series `{}`: {message}", panel.series_ids[i]),
            },
            other => other,
        })?;
        let skip = transformed.len() - out_len;
        values
            .row_mut(i)
            .iter_mut()
            .zip(&transformed[skip..])
            .for_each(|(dst, &v)| *dst = v);
    }
    let mut out = Panel::new(values, panel.series_ids.clone(), panel.time_ids[2..].to_vec())?;
    out.group_ids = panel.group_ids.clone();
    Ok(out)
}

fn row_moments(row: ArrayView1<'_, f64>) -> (f64, f64) {
    let t = row.len() as f64;
    let mean = row.sum() / t;
    let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (t - 1.0);
    (mean, var.sqrt())
}

/// Row means and sample standard deviations (denominator `T − 1`).
pub fn row_location_scale(values: &Array2<f64>) -> (Vec<f64>, Vec<f64>) {
    values.axis_iter(Axis(0)).map(row_moments).unzip()
}

/// Demeans each series and divides by its sample standard deviation
/// (denominator `T − 1`).
pub fn standardize(panel: &Panel) -> Result<Panel> {
    if panel.t() < 2 {
        return Err(Error::InsufficientSample(
            "standardization needs at least 2 time points".into(),
        ));
    }
    let mut values = panel.values.clone();
    for (i, mut row) in values.rows_mut().into_iter().enumerate() {
        let (mean, sd) = row_moments(row.view());
        let scale = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !(sd > scale * 1e-14) {
            return Err(Error::ConstantSeries(panel.series_ids[i].clone()));
        }
        row.mapv_inplace(|v| (v - mean) / sd);
    }
    Ok(Panel {
        values,
        series_ids: panel.series_ids.clone(),
        group_ids: panel.group_ids.clone(),
        time_ids: panel.time_ids.clone(),
        standardized: true,
    })
}
