use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use super::studies::{evaluate, CaseData, Sensor};
use super::{ExperimentKind, ExperimentSpec, StudyMethod};
use crate::dataset::{ingest_csv, split_random, Report, ReportMeta, SensorRecord};
use crate::error::{invalid, Error, Result};
use crate::labeling::kmeans_label;
use crate::mis::{train_mis_con, train_mis_con_lab, train_mis_sota, MisConfig, MultiModel};
use crate::seed::derive_seed;
use crate::sis::{
    cross_validate, train_lasso, train_olsr, train_pcr, train_plsr, train_subset_selection, ComponentConfig,
    LassoConfig, LinearModel, SubsetConfig,
};

/// Column of `x` with the largest absolute correlation with `y`.
fn most_correlated(x: &DMatrix<f64>, y: &DVector<f64>) -> usize {
    let yc = y.add_scalar(-y.mean());
    let corr = |j: usize| {
        let c = x.column(j).add_scalar(-x.column(j).mean());
        let den = c.norm() * yc.norm();
        if den > 0.0 { (c.dot(&yc) / den).abs() } else { 0.0 }
    };
    (0..x.ncols()).fold(0, |best, j| if corr(j) > corr(best) { j } else { best })
}

fn select_cols(data: &CaseData, cols: &[usize]) -> CaseData {
    CaseData {
        x_train: data.x_train.select_columns(cols.iter()),
        y_train: data.y_train.clone(),
        test: data.test.as_ref().map(|(x, y)| (x.select_columns(cols.iter()), y.clone())),
    }
}

struct Entry {
    case: String,
    method: String,
    inputs: Vec<String>,
    n_pc: Option<usize>,
    config: Value,
    sensor: Result<Sensor>,
}

fn train_mis(method: StudyMethod, cfg: &MisConfig, x: &DMatrix<f64>, y: &DVector<f64>, warm: Option<&MultiModel>) -> Result<MultiModel> {
    match method {
        StudyMethod::MisSota => train_mis_sota(x, y, cfg),
        StudyMethod::MisCon => {
            let labels = kmeans_label(x, 2, cfg.seed, cfg.kmeans_restarts, cfg.kmeans_max_iter)?;
            train_mis_con(x, y, &labels, cfg)
        }
        StudyMethod::MisConLab => train_mis_con_lab(x, y, cfg, warm),
        StudyMethod::SisOlsr => invalid("not a multi-model method"),
    }
}

/// Ingests a measurement CSV, splits it at random, normalizes on the
/// training rows and trains the single-model set (OLSR, PCR, PLSR, LASSO,
/// a univariate reference sensor, subset selection) plus the selected
/// multi-model sensors on the reference and subset-selection input
/// structures.
pub fn run_csv_workflow(path: impl AsRef<Path>, output_column: &str, spec: &ExperimentSpec) -> Result<Report> {
    spec.validate()?;
    let spec = ExperimentSpec { kind: ExperimentKind::CsvWorkflow, ..spec.clone() };
    let cfg = &spec.csv;
    let (ds, load) = ingest_csv(path, output_column, cfg.timestamp_column.as_deref())?;
    if ds.len() < 4 {
        return invalid(format!("only {} usable rows after ingest", ds.len()));
    }
    let split = split_random(&ds, cfg.train_fraction, derive_seed(spec.seed, 1))?;
    let data = CaseData::new(spec.norm_mode, &ds, Some(&split))?;
    let (x, y) = (&data.x_train, &data.y_train);
    let np = x.ncols();
    let names = |cols: &[usize]| cols.iter().map(|&j| ds.input_names[j].clone()).collect::<Vec<_>>();
    let all: Vec<usize> = (0..np).collect();
    let cv_seed = derive_seed(spec.seed, 2);
    let mut entries = Vec::new();
    let mut linear = |case: &str, method: &str, cols: &[usize], n_pc: Option<usize>, config: Value, fit: Result<LinearModel>| {
        entries.push(Entry {
            case: case.into(),
            method: method.into(),
            inputs: names(cols),
            n_pc,
            config,
            sensor: fit.map(Sensor::Linear),
        });
    };

    linear("full", "sis_olsr", &all, None, json!({}), train_olsr(x, y));

    for (method, plsr) in [("sis_pcr", false), ("sis_plsr", true)] {
        let grid: Vec<ComponentConfig> = (1..=np).map(|k| ComponentConfig { n_pc: k }).collect();
        let trainer = |a: &DMatrix<f64>, b: &DVector<f64>, c: &ComponentConfig| if plsr { train_plsr(a, b, c) } else { train_pcr(a, b, c) };
        let cv = cross_validate(trainer, x, y, &grid, cfg.cv_folds, cv_seed);
        let n_pc = cv.as_ref().ok().map(|c| c.best.n_pc);
        let fit = cv.and_then(|c| trainer(x, y, &c.best));
        linear("full", method, &all, n_pc, json!({ "n_pc": n_pc }), fit);
    }

    let grid: Vec<LassoConfig> = cfg.lasso_lambdas.iter().map(|&l| LassoConfig::new(l)).collect();
    let cv = cross_validate(train_lasso, x, y, &grid, cfg.cv_folds, cv_seed);
    let lambda = cv.as_ref().ok().map(|c| c.best.lambda);
    let fit = cv.and_then(|c| train_lasso(x, y, &c.best));
    let support = fit.as_ref().map(LinearModel::support).unwrap_or_default();
    linear("full", "sis_lasso", &support, None, json!({ "lambda": lambda }), fit);

    let ref_idx = match &cfg.ref_column {
        Some(name) => ds
            .input_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownColumn(name.clone()))?,
        None => most_correlated(x, y),
    };
    let mut structures = vec![("ref".to_string(), vec![ref_idx])];
    let xr = x.select_columns([ref_idx].iter());
    linear("ref", "sis_ref", &[ref_idx], None, json!({ "column": ds.input_names[ref_idx] }), train_olsr(&xr, y));

    for &k in cfg.subset_sizes.iter().filter(|&&k| k >= 1 && k <= np) {
        let fit = train_subset_selection(x, y, &SubsetConfig::new(k));
        let support = fit.as_ref().map(LinearModel::support).unwrap_or_default();
        let case = format!("ss{k}");
        if !support.is_empty() {
            structures.push((case.clone(), support.clone()));
        }
        linear(&case, &format!("sis_ss{k}"), &support, None, json!({ "n_p_tilde": k }), fit);
    }

    let mis_seed = derive_seed(spec.seed, 3);
    for (case, cols) in &structures {
        let sub = select_cols(&data, cols);
        let mut warm: Option<MultiModel> = None;
        for &method in spec.methods.iter().filter(|m| **m != StudyMethod::SisOlsr) {
            let mcfg = MisConfig { seed: mis_seed, ..spec.config_for(method).cloned().unwrap_or_default() };
            let fit = train_mis(method, &mcfg, &sub.x_train, &sub.y_train, warm.as_ref());
            if let (Ok(m), StudyMethod::MisCon) = (&fit, method) {
                warm = Some(m.clone());
            }
            entries.push(Entry {
                case: case.clone(),
                method: method.name().into(),
                inputs: names(cols),
                n_pc: None,
                config: json!({ "alpha": mcfg.alpha, "beta": mcfg.beta }),
                sensor: fit.map(Sensor::Multi),
            });
        }
    }

    let mut sensors = Vec::new();
    let mut table = Vec::new();
    let mut statuses: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
    let mut excluded: BTreeMap<String, usize> = BTreeMap::new();
    let mut failures = Vec::new();
    for e in entries {
        let cols: Vec<usize> = e.inputs.iter().filter_map(|n| ds.input_names.iter().position(|m| m == n)).collect();
        let outcome = e.sensor.and_then(|s| {
            let sub = if e.method.starts_with("mis_") || e.method == "sis_ref" { select_cols(&data, &cols) } else { select_cols(&data, &all) };
            evaluate(&s, &sub).map(|r| (s, r))
        });
        match outcome {
            Ok((s, (rmse_train, rmse_test))) => {
                for st in s.statuses() {
                    *statuses.entry(e.method.clone()).or_default().entry(st).or_default() += 1;
                }
                table.push(json!({
                    "case": e.case,
                    "method": e.method,
                    "inputs": e.inputs.join(" "),
                    "n_p": e.inputs.len(),
                    "n_pc": e.n_pc,
                    "rmse_train": rmse_train,
                    "rmse_test": rmse_test,
                }));
                sensors.push(SensorRecord {
                    method: e.method,
                    n_p: e.inputs.len(),
                    n_pc: e.n_pc,
                    rmse_train,
                    rmse_test,
                    config: e.config,
                    seed: spec.seed,
                    case: e.case,
                });
            }
            Err(err) => {
                log::warn!("{} on {}: {err}", e.method, e.case);
                *excluded.entry(format!("{}/{}", e.case, e.method)).or_default() += 1;
                failures.push(json!({ "case": e.case, "method": e.method, "error": err.to_string() }));
            }
        }
    }
    if sensors.is_empty() {
        return invalid("no sensor could be trained");
    }
    let mut series = BTreeMap::from([
        ("table".to_string(), Value::Array(table)),
        ("load".to_string(), serde_json::to_value(&load)?),
    ]);
    if !failures.is_empty() {
        series.insert("failures".into(), Value::Array(failures));
    }
    Ok(Report {
        sensors,
        series,
        meta: ReportMeta {
            seed: spec.seed,
            timestamp: spec.timestamp.clone(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: serde_json::to_value(&spec)?,
            statuses,
            excluded,
        },
    })
}
