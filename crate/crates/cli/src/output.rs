use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde_json::Value;
use softsensor_core::dataset::{emit_report, Report};

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Renders an array of flat JSON objects as CSV. Columns follow the key
/// order of the first row; later rows may omit keys.
pub fn rows_to_csv(rows: &[Value]) -> Result<Option<String>> {
    let Some(Value::Object(first)) = rows.first() else {
        return Ok(None);
    };
    let header: Vec<&String> = first.keys().collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header.iter().map(|h| h.as_str()))?;
    for row in rows {
        let obj = row.as_object().context("series rows must be objects")?;
        w.write_record(header.iter().map(|h| obj.get(*h).map(cell).unwrap_or_default()))?;
    }
    Ok(Some(String::from_utf8(w.into_inner()?)?))
}

/// `<dir>/<stem>.<series>.csv` next to the report path.
fn series_path(report_path: &Path, series: &str) -> PathBuf {
    let stem = report_path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    report_path.with_file_name(format!("{stem}.{series}.csv"))
}

/// Writes the JSON report to `out` (stdout when absent) and every
/// row-shaped series as a CSV file beside it.
pub fn write_outputs(report: &Report, out: Option<&Path>) -> Result<()> {
    let text = emit_report(report)?;
    let Some(path) = out else {
        print!("{text}");
        return Ok(());
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    for (name, value) in &report.series {
        if let Value::Array(rows) = value {
            if let Some(csv) = rows_to_csv(rows)? {
                let p = series_path(path, name);
                fs::write(&p, csv).with_context(|| format!("writing {}", p.display()))?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn flat_rows_become_csv() {
        let rows = vec![json!({"a": 1, "b": "x"}), json!({"a": 2.5, "b": null})];
        assert_eq!(rows_to_csv(&rows).unwrap().unwrap(), "a,b\n1,x\n2.5,\n");
    }

    #[test]
    fn series_files_sit_beside_the_report() {
        assert_eq!(series_path(Path::new("out/run.json"), "summary"), PathBuf::from("out/run.summary.csv"));
    }
}
