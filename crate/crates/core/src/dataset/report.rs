use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{invalid, Result};

/// One trained sensor in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorRecord {
    pub method: String,
    /// Number of inputs used by the sensor.
    pub n_p: usize,
    /// Number of principal components or latent variables, when applicable.
    pub n_pc: Option<usize>,
    pub rmse_train: f64,
    /// Absent when the run has no test set.
    pub rmse_test: Option<f64>,
    pub config: Value,
    pub seed: u64,
    /// Dataset or scenario the record belongs to, e.g. `two_cluster`.
    #[serde(default)]
    pub case: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub seed: u64,
    pub timestamp: String,
    pub version: String,
    /// Exact configuration the run used.
    #[serde(default)]
    pub config: Value,
    /// Solver status counts per method.
    #[serde(default)]
    pub statuses: BTreeMap<String, BTreeMap<String, usize>>,
    /// Replicates excluded after a failure, per method.
    #[serde(default)]
    pub excluded: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub sensors: Vec<SensorRecord>,
    /// Plot-ready data keyed by figure or table name.
    pub series: BTreeMap<String, Value>,
    pub meta: ReportMeta,
}

/// Serializes a report as pretty-printed JSON.
pub fn emit_report(report: &Report) -> Result<String> {
    if report.sensors.is_empty() {
        return invalid("report has no sensor records");
    }
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

pub fn write_report(report: &Report, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, emit_report(report)?)?;
    Ok(())
}

pub fn parse_report(text: &str) -> Result<Report> {
    Ok(serde_json::from_str(text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> ReportMeta {
        ReportMeta {
            seed: 1,
            timestamp: "1970-01-01T00:00:00Z".into(),
            version: "0.1.0".into(),
            config: Value::Null,
            statuses: BTreeMap::new(),
            excluded: BTreeMap::new(),
        }
    }

    #[test]
    fn empty_report_is_an_error() {
        let r = Report { sensors: vec![], series: BTreeMap::new(), meta: meta() };
        assert!(emit_report(&r).is_err());
    }

    #[test]
    fn single_record_has_all_fields() {
        let rec = SensorRecord {
            method: "sis_olsr".into(),
            n_p: 2,
            n_pc: None,
            rmse_train: 0.1 + 0.2,
            rmse_test: Some(1.0 / 3.0),
            config: serde_json::json!({"lambda": 0.5}),
            seed: 7,
            case: String::new(),
        };
        let r = Report { sensors: vec![rec], series: BTreeMap::new(), meta: meta() };
        let text = emit_report(&r).unwrap();
        let v: Value = serde_json::from_str(&text).unwrap();
        for k in ["method", "n_p", "n_pc", "rmse_train", "rmse_test", "config", "seed"] {
            assert!(v["sensors"][0].get(k).is_some(), "{k}");
        }
        assert_eq!(parse_report(&text).unwrap(), r);
    }
}
