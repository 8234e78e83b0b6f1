//! Loading raw sensor tables, dropping incomplete rows, and telling
//! continuous sensors apart from discrete (actuator-like) ones.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;

pub const DEFAULT_MAX_DISCRETE_CARDINALITY: usize = 12;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        /// 1-based data row (the header is row 0).
        row: usize,
        column: String,
        message: String,
    },
    #[error("timestamps not strictly increasing at row {row}")]
    NonMonotoneTimestamps { row: usize },
    #[error("all {rows} rows contained missing values")]
    AllRowsDropped { rows: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    /// Column holding timestamps. It is validated for monotonicity and not modeled.
    #[serde(default)]
    pub timestamp_column: Option<String>,
}

fn default_delimiter() -> char {
    ','
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { delimiter: default_delimiter(), timestamp_column: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub name: String,
    /// Integer ticks; ISO-8601 inputs are converted to Unix nanoseconds.
    pub timestamps: Option<Vec<i64>>,
    pub timestamp_column: Option<String>,
    pub values: Matrix,
    pub column_names: Vec<String>,
    pub provenance: Vec<String>,
}

impl RawDataset {
    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn n_sensors(&self) -> usize {
        self.values.cols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SensorKind {
    Continuous,
    Discrete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorMeta {
    pub index: usize,
    pub name: String,
    pub kind: SensorKind,
    /// Distinct raw values, strictly ascending. Empty for continuous sensors.
    pub observed_states: Vec<f64>,
    /// Occurrence count of each entry of `observed_states`.
    pub state_counts: Vec<usize>,
    pub train_mean: f64,
    pub train_std: f64,
}

impl SensorMeta {
    pub fn is_discrete(&self) -> bool {
        self.kind == SensorKind::Discrete
    }

    /// A discrete sensor that never changes value.
    pub fn is_degenerate(&self) -> bool {
        self.is_discrete() && self.observed_states.len() == 1
    }

    pub fn standardize(&self, raw: f64) -> f64 {
        (raw - self.train_mean) / self.train_std
    }
}

pub fn load_table(path: &Path, options: &LoadOptions) -> Result<RawDataset, IngestError> {
    let display = path.display().to_string();
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => IngestError::FileNotFound(display.clone()),
        _ => IngestError::Io { path: display.clone(), source: e },
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| display.clone());
    read_table(file, &name, options)
}

pub fn read_table<R: Read>(
    reader: R,
    name: &str,
    options: &LoadOptions,
) -> Result<RawDataset, IngestError> {
    let delimiter = u8::try_from(options.delimiter).map_err(|_| IngestError::Parse {
        row: 0,
        column: String::new(),
        message: format!("delimiter {:?} is not a single byte", options.delimiter),
    })?;
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .delimiter(delimiter)
        .flexible(false)
        .from_reader(reader);

    let headers = csv
        .headers()
        .map_err(|e| csv_error(e, "<header>"))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect::<Vec<_>>();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(parse_err(0, "<header>", "missing header row"));
    }

    let ts_col = match &options.timestamp_column {
        Some(ts) => Some(
            headers
                .iter()
                .position(|h| h == ts)
                .ok_or_else(|| parse_err(0, ts, "declared timestamp column not in header"))?,
        ),
        None => None,
    };
    let column_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != ts_col)
        .map(|(_, h)| h.clone())
        .collect();
    if column_names.is_empty() {
        return Err(parse_err(0, "<header>", "no sensor columns"));
    }

    let mut data = Vec::new();
    let mut timestamps = ts_col.map(|_| Vec::new());
    let mut rows = 0;
    for (r, record) in csv.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| csv_error(e, "<record>"))?;
        for (c, cell) in record.iter().enumerate() {
            if Some(c) == ts_col {
                let ts = parse_timestamp(cell.trim())
                    .ok_or_else(|| parse_err(row, &headers[c], &format!("bad timestamp {cell:?}")))?;
                timestamps.as_mut().expect("timestamp column").push(ts);
            } else {
                let v = parse_cell(cell)
                    .ok_or_else(|| parse_err(row, &headers[c], &format!("non-numeric value {cell:?}")))?;
                data.push(v);
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(parse_err(0, "<header>", "no data rows"));
    }
    if let Some(ts) = &timestamps {
        if let Some(w) = ts.windows(2).position(|w| w[1] <= w[0]) {
            return Err(IngestError::NonMonotoneTimestamps { row: w + 2 });
        }
    }

    Ok(RawDataset {
        name: name.to_string(),
        timestamps,
        timestamp_column: options.timestamp_column.clone(),
        values: Matrix::from_vec(rows, column_names.len(), data),
        column_names,
        provenance: vec![format!("loaded {rows} rows")],
    })
}

fn parse_err(row: usize, column: &str, message: &str) -> IngestError {
    IngestError::Parse { row, column: column.to_string(), message: message.to_string() }
}

fn csv_error(e: csv::Error, column: &str) -> IngestError {
    let row = e.position().map_or(0, |p| p.record() as usize);
    parse_err(row, column, &e.to_string())
}

/// Empty cells and the usual missing-value spellings map to NaN.
fn parse_cell(cell: &str) -> Option<f64> {
    let cell = cell.trim();
    match cell {
        "" | "NA" | "N/A" | "NaN" | "nan" | "null" | "NULL" => Some(f64::NAN),
        _ => cell.parse::<f64>().ok(),
    }
}

fn parse_timestamp(cell: &str) -> Option<i64> {
    if let Ok(v) = cell.parse::<i64>() {
        return Some(v);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(cell) {
        return dt.timestamp_nanos_opt();
    }
    for fmt in ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(cell, fmt) {
            return dt.and_utc().timestamp_nanos_opt();
        }
    }
    NaiveDate::parse_from_str(cell, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .and_then(|dt| dt.and_utc().timestamp_nanos_opt())
}

/// Writes the canonical CSV form: header row, optional integer timestamp
/// column first, values in shortest round-trip notation.
pub fn write_canonical_csv<W: Write>(ds: &RawDataset, writer: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(writer);
    let ts_name = ds.timestamp_column.clone().unwrap_or_else(|| "timestamp".to_string());
    let mut header: Vec<&str> = Vec::new();
    if ds.timestamps.is_some() {
        header.push(&ts_name);
    }
    header.extend(ds.column_names.iter().map(String::as_str));
    out.write_record(&header)?;
    for r in 0..ds.rows() {
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        if let Some(ts) = &ds.timestamps {
            record.push(ts[r].to_string());
        }
        record.extend(ds.values.row(r).iter().map(|v| v.to_string()));
        out.write_record(&record)?;
    }
    out.flush()?;
    Ok(())
}

pub fn drop_missing(ds: RawDataset) -> Result<RawDataset, IngestError> {
    let before = ds.rows();
    let keep: Vec<bool> = (0..before)
        .map(|r| ds.values.row(r).iter().all(|v| v.is_finite()))
        .collect();
    let kept = keep.iter().filter(|k| **k).count();
    if kept == 0 {
        return Err(IngestError::AllRowsDropped { rows: before });
    }
    if kept == before {
        return Ok(ds);
    }
    let values = ds.values.filter_rows(|r, _| keep[r]);
    let timestamps = ds
        .timestamps
        .map(|ts| ts.into_iter().zip(&keep).filter(|(_, k)| **k).map(|(t, _)| t).collect());
    let mut provenance = ds.provenance;
    provenance.push(format!("dropped {} of {before} rows with missing values", before - kept));
    Ok(RawDataset { values, timestamps, provenance, ..ds })
}

/// A sensor is discrete when it takes at most `max_discrete_cardinality`
/// distinct values over the whole table.
pub fn classify_sensors(ds: &RawDataset, max_discrete_cardinality: usize) -> Vec<SensorMeta> {
    (0..ds.n_sensors())
        .map(|j| {
            let mut column: Vec<f64> = ds
                .values
                .column(j)
                .into_iter()
                .map(|v| if v == 0.0 { 0.0 } else { v })
                .collect();
            column.sort_by(f64::total_cmp);
            let mut states: Vec<f64> = Vec::new();
            let mut counts: Vec<usize> = Vec::new();
            for v in column {
                match states.last() {
                    Some(last) if last.to_bits() == v.to_bits() => *counts.last_mut().unwrap() += 1,
                    _ => {
                        if states.len() == max_discrete_cardinality {
                            states.clear();
                            counts.clear();
                            break;
                        }
                        states.push(v);
                        counts.push(1);
                    }
                }
            }
            let kind = if states.is_empty() { SensorKind::Continuous } else { SensorKind::Discrete };
            SensorMeta {
                index: j,
                name: ds.column_names[j].clone(),
                kind,
                observed_states: states,
                state_counts: counts,
                train_mean: 0.0,
                train_std: 1.0,
            }
        })
        .collect()
}
