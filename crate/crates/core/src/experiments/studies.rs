use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde_json::{json, Value};

use super::stats::summarize;
use super::{ExperimentKind, ExperimentSpec, StudyMethod};
use crate::dataset::{
    generate_pct_dataset, rmse, split_by_regime, split_random, Dataset, NormalizationState, Regime, Report,
    ReportMeta, SensorRecord, Split,
};
use crate::error::{invalid, Result};
use crate::mis::{continuity_gap, predict_mis, train_mis_con, train_mis_con_lab, train_mis_sota, MultiModel};
use crate::labeling::kmeans_label;
use crate::seed::derive_seed;
use crate::sis::{predict_linear, train_olsr, LinearModel};

/// A trained sensor of either family.
pub(super) enum Sensor {
    Linear(LinearModel),
    Multi(MultiModel),
}

impl Sensor {
    pub(super) fn predict(&self, x: &DMatrix<f64>) -> Result<DVector<f64>> {
        match self {
            Sensor::Linear(m) => predict_linear(m, x),
            Sensor::Multi(m) => predict_mis(m, x),
        }
    }

    /// `stage:status` strings of the solver calls behind the sensor.
    pub(super) fn statuses(&self) -> Vec<String> {
        match self {
            Sensor::Linear(_) => vec!["fit:optimal".into()],
            Sensor::Multi(m) => {
                let mut v: Vec<String> = m
                    .meta
                    .statuses
                    .iter()
                    .map(|(stage, s)| format!("{stage}:{}", serde_json::to_value(s).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()))
                    .collect();
                if m.meta.fallback {
                    v.push("labels:fallback".into());
                }
                v
            }
        }
    }
}

/// Training and test matrices of one case, already normalized.
pub(super) struct CaseData {
    pub x_train: DMatrix<f64>,
    pub y_train: DVector<f64>,
    pub test: Option<(DMatrix<f64>, DVector<f64>)>,
}

impl CaseData {
    /// Normalizes with parameters fitted on the training rows only.
    pub(super) fn new(spec_mode: crate::dataset::NormMode, ds: &Dataset, split: Option<&Split>) -> Result<Self> {
        let train: Vec<usize> = match split {
            Some(s) => s.train.clone(),
            None => (0..ds.len()).collect(),
        };
        let state = NormalizationState::fit_rows(ds, &train, spec_mode)?;
        let nd = state.apply(ds)?;
        let tr = nd.rows(&train);
        let test = match split {
            Some(s) if !s.test.is_empty() => {
                let te = nd.rows(&s.test);
                Some((te.inputs, te.output))
            }
            _ => None,
        };
        Ok(CaseData { x_train: tr.inputs, y_train: tr.output, test })
    }
}

/// Result of one method on one case of one replicate.
pub(super) struct Outcome {
    pub case: String,
    pub method: String,
    pub replicate: usize,
    pub result: std::result::Result<Evaluated, String>,
}

pub(super) struct Evaluated {
    pub record: SensorRecord,
    pub statuses: Vec<String>,
    /// Coefficient residual and boundary gap of continuous sensors.
    pub continuity: Option<(f64, f64)>,
}

pub(super) fn evaluate(sensor: &Sensor, data: &CaseData) -> Result<(f64, Option<f64>)> {
    let fit = sensor.predict(&data.x_train)?;
    let train = rmse(data.y_train.as_slice(), fit.as_slice())?;
    let test = match &data.test {
        Some((x, y)) => Some(rmse(y.as_slice(), sensor.predict(x)?.as_slice())?),
        None => None,
    };
    Ok((train, test))
}

fn train_method(
    method: StudyMethod,
    spec: &ExperimentSpec,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    seed: u64,
    warm: Option<&MultiModel>,
) -> Result<Sensor> {
    let cfg = spec.config_for(method).map(|c| crate::mis::MisConfig { seed, ..c.clone() });
    Ok(match (method, cfg) {
        (StudyMethod::SisOlsr, _) => Sensor::Linear(train_olsr(x, y)?),
        (StudyMethod::MisSota, Some(cfg)) => Sensor::Multi(train_mis_sota(x, y, &cfg)?),
        (StudyMethod::MisCon, Some(cfg)) => {
            let labels = kmeans_label(x, 2, cfg.seed, cfg.kmeans_restarts, cfg.kmeans_max_iter)?;
            Sensor::Multi(train_mis_con(x, y, &labels, &cfg)?)
        }
        (StudyMethod::MisConLab, Some(cfg)) => Sensor::Multi(train_mis_con_lab(x, y, &cfg, warm)?),
        _ => unreachable!("every multi-model method has a config"),
    })
}

fn method_config(spec: &ExperimentSpec, method: StudyMethod) -> Value {
    match spec.config_for(method) {
        Some(c) => json!({ "alpha": c.alpha, "beta": c.beta }),
        None => json!({}),
    }
}

/// Trains every selected method on one case. The continuity trainer's
/// output warm-starts the label optimizer when both are selected.
fn run_case(spec: &ExperimentSpec, case: &str, data: &CaseData, replicate: usize, seed: u64) -> Vec<Outcome> {
    let method_seed = derive_seed(seed, 2);
    let mut warm: Option<MultiModel> = None;
    let mut out = Vec::new();
    for &method in &spec.methods {
        let result = (|| -> Result<Evaluated> {
            let sensor = train_method(method, spec, &data.x_train, &data.y_train, method_seed, warm.as_ref())?;
            let (rmse_train, rmse_test) = evaluate(&sensor, data)?;
            let continuity = match (&sensor, method) {
                (Sensor::Multi(m), StudyMethod::MisCon | StudyMethod::MisConLab) => Some((
                    m.continuity_residual(),
                    continuity_gap(m, spec.continuity_probes, derive_seed(seed, 3))?,
                )),
                _ => None,
            };
            let statuses = sensor.statuses();
            if let (Sensor::Multi(m), StudyMethod::MisCon) = (&sensor, method) {
                warm = Some(m.clone());
            }
            Ok(Evaluated {
                record: SensorRecord {
                    method: method.name().into(),
                    n_p: data.x_train.ncols(),
                    n_pc: None,
                    rmse_train,
                    rmse_test,
                    config: method_config(spec, method),
                    seed,
                    case: case.into(),
                },
                statuses,
                continuity,
            })
        })();
        if let Err(e) = &result {
            log::warn!("replicate {replicate}, {case}, {}: {e}", method.name());
        }
        out.push(Outcome {
            case: case.into(),
            method: method.name().into(),
            replicate,
            result: result.map_err(|e| e.to_string()),
        });
    }
    out
}

/// Accumulates outcomes in replicate order into the report parts.
#[derive(Default)]
pub(super) struct Collector {
    pub sensors: Vec<SensorRecord>,
    pub samples: Vec<Value>,
    pub continuity: Vec<Value>,
    pub statuses: BTreeMap<String, BTreeMap<String, usize>>,
    pub excluded: BTreeMap<String, usize>,
    pub failures: Vec<Value>,
    /// Metric values per (case, method), in insertion order of the keys.
    pub cells: Vec<((String, String), Vec<f64>)>,
}

impl Collector {
    pub(super) fn push(&mut self, o: Outcome, use_test: bool) {
        let key = format!("{}/{}", o.case, o.method);
        let cell = match self.cells.iter().position(|(k, _)| k.0 == o.case && k.1 == o.method) {
            Some(i) => i,
            None => {
                self.cells.push(((o.case.clone(), o.method.clone()), Vec::new()));
                self.cells.len() - 1
            }
        };
        match o.result {
            Ok(ev) => {
                for s in &ev.statuses {
                    *self.statuses.entry(o.method.clone()).or_default().entry(s.clone()).or_default() += 1;
                }
                let metric = if use_test { ev.record.rmse_test } else { Some(ev.record.rmse_train) };
                match metric {
                    Some(v) if v.is_finite() => self.cells[cell].1.push(v),
                    _ => {
                        *self.excluded.entry(key).or_default() += 1;
                        return;
                    }
                }
                self.samples.push(json!({
                    "case": o.case,
                    "replicate": o.replicate,
                    "method": o.method,
                    "rmse_train": ev.record.rmse_train,
                    "rmse_test": ev.record.rmse_test,
                }));
                if let Some((residual, gap)) = ev.continuity {
                    self.continuity.push(json!({
                        "case": o.case,
                        "replicate": o.replicate,
                        "method": o.method,
                        "coefficient_residual": residual,
                        "boundary_gap": gap,
                    }));
                }
                self.sensors.push(ev.record);
            }
            Err(e) => {
                *self.excluded.entry(key).or_default() += 1;
                self.failures.push(json!({ "case": o.case, "replicate": o.replicate, "method": o.method, "error": e }));
            }
        }
    }

    /// One box-statistics row per (case, method) cell with data.
    pub(super) fn summary(&self) -> Vec<Value> {
        self.cells
            .iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|((case, method), v)| {
                let b = summarize(v);
                json!({
                    "case": case,
                    "method": method,
                    "count": b.count,
                    "median": b.median,
                    "q25": b.q25,
                    "q75": b.q75,
                    "whisker_lo": b.whisker_lo,
                    "whisker_hi": b.whisker_hi,
                    "outliers": b.outliers,
                })
            })
            .collect()
    }

    pub(super) fn into_report(self, spec: &ExperimentSpec, mut series: BTreeMap<String, Value>) -> Result<Report> {
        series.insert("summary".into(), Value::Array(self.summary()));
        series.insert("samples".into(), Value::Array(self.samples));
        if !self.continuity.is_empty() {
            series.insert("continuity".into(), Value::Array(self.continuity));
        }
        if !self.failures.is_empty() {
            series.insert("failures".into(), Value::Array(self.failures));
        }
        if self.sensors.is_empty() {
            return invalid("every replicate failed; nothing to report");
        }
        Ok(Report {
            sensors: self.sensors,
            series,
            meta: ReportMeta {
                seed: spec.seed,
                timestamp: spec.timestamp.clone(),
                version: env!("CARGO_PKG_VERSION").into(),
                config: serde_json::to_value(spec)?,
                statuses: self.statuses,
                excluded: self.excluded,
            },
        })
    }
}

fn pct_data(spec: &ExperimentSpec, regimes: &[Regime], sigma: f64, seed: u64) -> Result<(Dataset, Vec<usize>)> {
    let params = crate::dataset::PctParams { noise_sigma: sigma, seed, ..spec.pct.clone() };
    generate_pct_dataset(&params, regimes)
}

fn with_kind(spec: &ExperimentSpec, kind: ExperimentKind) -> Result<ExperimentSpec> {
    spec.validate()?;
    Ok(ExperimentSpec { kind, ..spec.clone() })
}

/// Flattens per-job outcomes, failing only on data-generation errors.
fn collect(jobs: Vec<Result<Vec<Outcome>>>, use_test: bool) -> Result<Collector> {
    let mut c = Collector::default();
    for job in jobs {
        for o in job? {
            c.push(o, use_test);
        }
    }
    Ok(c)
}

/// Fits every method on the one-cluster, two-cluster and indistinct PCT
/// datasets of each replicate and reports training RMSE.
pub fn run_illustrative(spec: &ExperimentSpec) -> Result<Report> {
    let spec = with_kind(spec, ExperimentKind::Illustrative)?;
    let cases = [
        ("one_cluster", &spec.illustrative.one_cluster),
        ("two_cluster", &spec.illustrative.two_cluster),
        ("indistinct", &spec.illustrative.indistinct),
    ];
    let jobs: Vec<Result<Vec<Outcome>>> = (0..spec.replicates)
        .into_par_iter()
        .map(|r| {
            let rep_seed = derive_seed(spec.seed, r as u64);
            let mut out = Vec::new();
            for (k, (case, regimes)) in cases.iter().enumerate() {
                let case_seed = derive_seed(rep_seed, 10 + k as u64);
                let (ds, _) = pct_data(&spec, regimes, spec.pct.noise_sigma, derive_seed(case_seed, 0))?;
                let data = CaseData::new(spec.norm_mode, &ds, None)?;
                out.extend(run_case(&spec, case, &data, r, case_seed));
            }
            Ok(out)
        })
        .collect();
    collect(jobs, false)?.into_report(&spec, BTreeMap::new())
}

/// Desirable (random split) versus undesirable (held-out regime) scenario
/// comparison of test RMSE over the replicates.
pub fn run_scenario_study(spec: &ExperimentSpec) -> Result<Report> {
    let spec = with_kind(spec, ExperimentKind::ScenarioStudy)?;
    if spec.regimes.len() < 2 {
        return invalid("the scenario study needs at least two regimes");
    }
    let jobs: Vec<Result<Vec<Outcome>>> = (0..spec.replicates)
        .into_par_iter()
        .map(|r| {
            let rep_seed = derive_seed(spec.seed, r as u64);
            let (ds, regime) = pct_data(&spec, &spec.regimes, spec.pct.noise_sigma, derive_seed(rep_seed, 0))?;
            let desirable = split_random(&ds, spec.train_fraction, derive_seed(rep_seed, 1))?;
            let undesirable = split_by_regime(&ds, &regime, &spec.train_regimes)?;
            let mut out = Vec::new();
            for (case, split) in [("desirable", &desirable), ("undesirable", &undesirable)] {
                let data = CaseData::new(spec.norm_mode, &ds, Some(split))?;
                out.extend(run_case(&spec, case, &data, r, rep_seed));
            }
            Ok(out)
        })
        .collect();
    collect(jobs, true)?.into_report(&spec, BTreeMap::new())
}

/// Case label of one noise level.
pub(super) fn sigma_case(sigma: f64) -> String {
    format!("sigma={sigma}")
}

/// Median test RMSE per method and noise level on desirable-scenario splits.
/// Replicate `r` uses the same operating points and split at every noise
/// level; only the noise amplitude changes.
pub fn run_noise_sweep(spec: &ExperimentSpec) -> Result<Report> {
    let spec = with_kind(spec, ExperimentKind::NoiseSweep)?;
    if spec.sigmas.is_empty() {
        return invalid("the noise sweep needs at least one noise level");
    }
    let tasks: Vec<(f64, usize)> = spec.sigmas.iter().flat_map(|&s| (0..spec.replicates).map(move |r| (s, r))).collect();
    let jobs: Vec<Result<Vec<Outcome>>> = tasks
        .par_iter()
        .map(|&(sigma, r)| {
            let rep_seed = derive_seed(spec.seed, r as u64);
            let (ds, _) = pct_data(&spec, &spec.regimes, sigma, derive_seed(rep_seed, 0))?;
            let split = split_random(&ds, spec.train_fraction, derive_seed(rep_seed, 1))?;
            let data = CaseData::new(spec.norm_mode, &ds, Some(&split))?;
            Ok(run_case(&spec, &sigma_case(sigma), &data, r, rep_seed))
        })
        .collect();
    let c = collect(jobs, true)?;
    let mut medians = Vec::new();
    for &sigma in &spec.sigmas {
        for m in &spec.methods {
            if let Some((_, v)) = c.cells.iter().find(|(k, _)| k.0 == sigma_case(sigma) && k.1 == m.name()) {
                if !v.is_empty() {
                    medians.push(json!({ "sigma": sigma, "method": m.name(), "count": v.len(), "median": summarize(v).median }));
                }
            }
        }
    }
    let series = BTreeMap::from([("noise_sweep".to_string(), Value::Array(medians))]);
    c.into_report(&spec, series)
}
