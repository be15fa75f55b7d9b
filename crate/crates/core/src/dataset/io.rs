use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{invalid, Error, Result};

/// Row accounting for a CSV load.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_kept: usize,
    pub drop_count: usize,
    /// 1-based data-row numbers (header excluded) that were dropped.
    pub dropped_rows: Vec<usize>,
}

/// Loads a headed CSV. Every column other than the output and the optional
/// timestamp becomes an input; rows with an empty or non-numeric cell in
/// any of those columns are dropped and counted.
pub fn ingest_csv(
    path: impl AsRef<Path>,
    output_column: &str,
    timestamp_column: Option<&str>,
) -> Result<(Dataset, LoadReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)?;
    let header = rdr.headers()?.clone();
    let out_idx = header
        .iter()
        .position(|h| h == output_column)
        .ok_or_else(|| Error::UnknownColumn(output_column.to_string()))?;
    let ts_idx = match timestamp_column {
        Some(t) => Some(header.iter().position(|h| h == t).ok_or_else(|| Error::UnknownColumn(t.to_string()))?),
        None => None,
    };
    let in_idx: Vec<usize> = (0..header.len()).filter(|&j| j != out_idx && Some(j) != ts_idx).collect();
    if in_idx.is_empty() {
        return invalid("no input columns besides the output");
    }

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut report = LoadReport { rows_read: 0, rows_kept: 0, drop_count: 0, dropped_rows: Vec::new() };
    let parse = |rec: &csv::StringRecord, j: usize| -> Option<f64> {
        rec.get(j).and_then(|s| s.parse::<f64>().ok()).filter(|v| v.is_finite())
    };
    for rec in rdr.records() {
        let rec = rec?;
        report.rows_read += 1;
        let y = parse(&rec, out_idx);
        let x: Option<Vec<f64>> = in_idx.iter().map(|&j| parse(&rec, j)).collect();
        match (x, y) {
            (Some(x), Some(y)) => {
                xs.extend(x);
                ys.push(y);
            }
            _ => {
                report.drop_count += 1;
                report.dropped_rows.push(report.rows_read);
            }
        }
    }
    report.rows_kept = ys.len();
    if ys.is_empty() {
        return invalid("no usable rows in CSV");
    }
    if report.drop_count > 0 {
        log::warn!("dropped {} of {} CSV rows with missing or non-numeric cells", report.drop_count, report.rows_read);
    }
    let inputs = DMatrix::from_row_slice(ys.len(), in_idx.len(), &xs);
    let names = in_idx.iter().map(|&j| header[j].to_string()).collect();
    let ds = Dataset::new(inputs, DVector::from_vec(ys), names, output_column)?;
    Ok((ds, report))
}
