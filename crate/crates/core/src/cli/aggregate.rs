use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::score::{RobustnessReport, REPORT_SCHEMA_VERSION};

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("no reports given")]
    Empty,
    #[error("SchemaMismatch: {path} has schema version {got:?}, expected {expected}")]
    SchemaMismatch { path: String, expected: u32, got: Option<u64> },
    #[error("cannot read report {path}: {message}")]
    Read { path: String, message: String },
}

/// Mean and population standard deviation across reports of one model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub model: String,
    pub reports: usize,
    pub robustness_mean: f64,
    pub robustness_std: f64,
    pub test_mse_mean: f64,
    pub test_mse_std: f64,
}

pub fn read_report(path: &Path) -> Result<RobustnessReport, AggregateError> {
    let read_err = |message: String| AggregateError::Read { path: path.display().to_string(), message };
    let text = fs::read_to_string(path).map_err(|e| read_err(e.to_string()))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| read_err(e.to_string()))?;
    let version = value.get("schema_version").and_then(|v| v.as_u64());
    if version != Some(u64::from(REPORT_SCHEMA_VERSION)) {
        return Err(AggregateError::SchemaMismatch {
            path: path.display().to_string(),
            expected: REPORT_SCHEMA_VERSION,
            got: version,
        });
    }
    serde_json::from_value(value).map_err(|e| read_err(e.to_string()))
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Groups reports by model name, in order of first appearance.
pub fn aggregate(reports: &[RobustnessReport]) -> Result<Vec<ModelSummary>, AggregateError> {
    let first = reports.first().ok_or(AggregateError::Empty)?;
    if let Some(r) = reports.iter().find(|r| r.schema_version != first.schema_version) {
        return Err(AggregateError::SchemaMismatch {
            path: format!("{}/{}", r.dataset, r.model),
            expected: first.schema_version,
            got: Some(u64::from(r.schema_version)),
        });
    }
    let mut models: Vec<&str> = Vec::new();
    for r in reports {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
    }
    Ok(models
        .into_iter()
        .map(|model| {
            let group: Vec<&RobustnessReport> = reports.iter().filter(|r| r.model == model).collect();
            let (robustness_mean, robustness_std) =
                mean_std(&group.iter().map(|r| r.overall_robustness).collect::<Vec<_>>());
            let (test_mse_mean, test_mse_std) =
                mean_std(&group.iter().map(|r| r.baseline_test_mse).collect::<Vec<_>>());
            ModelSummary {
                model: model.to_string(),
                reports: group.len(),
                robustness_mean,
                robustness_std,
                test_mse_mean,
                test_mse_std,
            }
        })
        .collect())
}

pub fn write_summary_csv<W: Write>(rows: &[ModelSummary], writer: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(writer);
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

pub fn render_table(rows: &[ModelSummary]) -> String {
    let header = ["model", "reports", "R", "test MSE"];
    let cells: Vec<[String; 4]> = rows
        .iter()
        .map(|r| {
            [
                r.model.clone(),
                r.reports.to_string(),
                format!("{:.4} ± {:.4}", r.robustness_mean, r.robustness_std),
                format!("{:.4} ± {:.4}", r.test_mse_mean, r.test_mse_std),
            ]
        })
        .collect();
    let widths: Vec<usize> = (0..4)
        .map(|c| cells.iter().map(|row| row[c].chars().count()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let line = |row: &[&str]| {
        let mut s = String::new();
        for (c, cell) in row.iter().enumerate() {
            let pad = widths[c] - cell.chars().count();
            if c == 0 {
                s.push_str(cell);
                s.push_str(&" ".repeat(pad));
            } else {
                s.push_str("  ");
                s.push_str(&" ".repeat(pad));
                s.push_str(cell);
            }
        }
        s.trim_end().to_string()
    };
    let mut out = line(&header);
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for row in &cells {
        out.push_str(&line(&row.iter().map(String::as_str).collect::<Vec<_>>()));
        out.push('\n');
    }
    out
}
