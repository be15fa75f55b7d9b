//! Seeded studies on the synthetic PCT process and the CSV design workflow.
//! Every runner returns a [`Report`](crate::dataset::Report) whose `series`
//! entries are arrays of flat rows, ready for CSV export.

mod stats;
mod studies;
mod workflow;

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dataset::{NormMode, PctParams, Regime};
use crate::error::{invalid, Result};
use crate::mis::MisConfig;

pub use stats::{box_stats, BoxStats};
pub use studies::{run_illustrative, run_noise_sweep, run_scenario_study};
pub use workflow::run_csv_workflow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Illustrative,
    ScenarioStudy,
    NoiseSweep,
    CsvWorkflow,
}

/// Sensors compared in the PCT studies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyMethod {
    SisOlsr,
    MisSota,
    MisCon,
    MisConLab,
}

impl StudyMethod {
    pub const ALL: [StudyMethod; 4] = [StudyMethod::SisOlsr, StudyMethod::MisSota, StudyMethod::MisCon, StudyMethod::MisConLab];

    pub fn name(self) -> &'static str {
        match self {
            StudyMethod::SisOlsr => "sis_olsr",
            StudyMethod::MisSota => "mis_sota",
            StudyMethod::MisCon => "mis_con",
            StudyMethod::MisConLab => "mis_con_lab",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .map_or_else(|| invalid(format!("unknown method `{name}`")), Ok)
    }
}

/// Regimes of the three illustrative datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IllustrativeCases {
    /// One distinct cluster in the low-pressure band.
    pub one_cluster: Vec<Regime>,
    /// A near-linear low-pressure cluster and a curved high-pressure one.
    pub two_cluster: Vec<Regime>,
    /// Uniform sampling of the whole operating box.
    pub indistinct: Vec<Regime>,
}

impl Default for IllustrativeCases {
    fn default() -> Self {
        IllustrativeCases {
            one_cluster: vec![Regime::new((523.2, 573.2), (0.8, 1.5), 310)],
            two_cluster: two_regimes(155),
            indistinct: vec![Regime::new((523.2, 573.2), (0.4, 15.0), 310)],
        }
    }
}

fn two_regimes(count: usize) -> Vec<Regime> {
    vec![
        Regime::new((523.2, 548.2), (0.8, 1.5), count),
        Regime::new((548.2, 573.2), (2.0, 4.0), count),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvWorkflowConfig {
    /// Column used by the expert-knowledge univariate sensor; `None` picks
    /// the input most correlated with the output on the training rows.
    pub ref_column: Option<String>,
    /// Column excluded from the inputs, e.g. a time stamp.
    pub timestamp_column: Option<String>,
    pub train_fraction: f64,
    pub lasso_lambdas: Vec<f64>,
    pub cv_folds: usize,
    /// Subset sizes for the selection sensors.
    pub subset_sizes: Vec<usize>,
}

impl Default for CsvWorkflowConfig {
    fn default() -> Self {
        CsvWorkflowConfig {
            ref_column: None,
            timestamp_column: None,
            train_fraction: 0.5,
            lasso_lambdas: (0..9).map(|k| 10f64.powf(-4.0 + 0.5 * k as f64)).collect(),
            cv_folds: 5,
            subset_sizes: vec![1, 2],
        }
    }
}

/// Full description of a study run. Field names double as the keys of the
/// TOML config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub replicates: usize,
    /// Output noise levels of the noise sweep, in Kelvin.
    pub sigmas: Vec<f64>,
    pub methods: Vec<StudyMethod>,
    /// Master seed; replicate seeds are derived from it.
    pub seed: u64,
    pub output: Option<PathBuf>,
    /// Recorded in the report instead of the wall clock so reruns are
    /// byte-identical.
    pub timestamp: String,
    /// PCT constants and the noise level of the illustrative and scenario
    /// studies.
    pub pct: PctParams,
    pub illustrative: IllustrativeCases,
    /// Operating regimes of the scenario study and the noise sweep.
    pub regimes: Vec<Regime>,
    /// Training share of the random (desirable) split.
    pub train_fraction: f64,
    /// Regimes used for training in the regime-held-out (undesirable) split.
    pub train_regimes: BTreeSet<usize>,
    pub norm_mode: NormMode,
    pub mis_sota: MisConfig,
    pub mis_con: MisConfig,
    pub mis_con_lab: MisConfig,
    /// Boundary points sampled by the continuity audit.
    pub continuity_probes: usize,
    pub csv: CsvWorkflowConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            kind: ExperimentKind::ScenarioStudy,
            replicates: 100,
            sigmas: vec![0.1, 2.5, 5.0, 10.0, 25.0, 50.0],
            methods: StudyMethod::ALL.to_vec(),
            seed: 0,
            output: None,
            timestamp: "1970-01-01T00:00:00Z".into(),
            pct: PctParams::default(),
            illustrative: IllustrativeCases::default(),
            regimes: two_regimes(310),
            train_fraction: 0.5,
            train_regimes: BTreeSet::from([1]),
            norm_mode: NormMode::UnitInterval,
            mis_sota: MisConfig::default(),
            mis_con: MisConfig { alpha: 1e-2, beta: 0.04, ..MisConfig::default() },
            mis_con_lab: MisConfig { alpha: 0.5, beta: 5e-3, ..MisConfig::default() },
            continuity_probes: 1000,
            csv: CsvWorkflowConfig::default(),
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return invalid("replicates must be at least 1");
        }
        if self.methods.is_empty() {
            return invalid("no methods selected");
        }
        if let Some(s) = self.sigmas.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
            return invalid(format!("noise levels must be finite and nonnegative, got {s}"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return invalid("train_fraction must lie in (0, 1)");
        }
        if self.continuity_probes == 0 {
            return invalid("continuity_probes must be at least 1");
        }
        self.pct.validate()?;
        for cfg in [&self.mis_sota, &self.mis_con, &self.mis_con_lab] {
            cfg.validate()?;
        }
        Ok(())
    }

    fn config_for(&self, method: StudyMethod) -> Option<&MisConfig> {
        match method {
            StudyMethod::SisOlsr => None,
            StudyMethod::MisSota => Some(&self.mis_sota),
            StudyMethod::MisCon => Some(&self.mis_con),
            StudyMethod::MisConLab => Some(&self.mis_con_lab),
        }
    }
}
