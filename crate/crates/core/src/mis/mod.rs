//! Two-model inferential sensors: the cluster/classify/regress pipeline,
//! the continuity-constrained joint trainer, and joint optimization of the
//! labels.

mod con;
mod conlab;
mod sae;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classify::{train_linear_svm, Hyperplane};
use crate::dataset::NormalizationState;
use crate::error::{invalid, Error, Result};
use crate::labeling::{kmeans_label, Labels};
use crate::optim::{MilpOptions, Status};
use crate::sis::{train_olsr, LinearModel, Provenance};

pub use con::{con_qp, train_mis_con};
pub use conlab::{build_label_milp, default_a_bar, train_mis_con_lab, LabelMilp};
pub use sae::{sae_objective, solve_fixed_labels, SaeFit, Theta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MisMethod {
    Sota,
    Con,
    ConLab,
}

impl MisMethod {
    pub fn name(self) -> &'static str {
        match self {
            MisMethod::Sota => "mis_sota",
            MisMethod::Con => "mis_con",
            MisMethod::ConLab => "mis_con_lab",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MisConfig {
    /// Weight on the separator norm.
    pub alpha: f64,
    /// Weight on the margin slacks.
    pub beta: f64,
    /// Slack weight of the standalone SVM in the cluster/classify pipeline.
    pub svm_beta: f64,
    /// Big-M constant; `None` derives it from the data and `a_bar`.
    pub big_m: Option<f64>,
    /// Bound on every model and separator coefficient in the labeling MILP;
    /// `None` uses `10 * max(1, |OLSR coefficients|)`.
    pub a_bar: Option<f64>,
    pub milp: MilpOptions,
    /// Largest training set for which branch-and-bound runs after the label
    /// search; above it the search result is final.
    pub exact_milp_max_points: usize,
    /// Extra seeded starting labelings tried by the label search besides
    /// the warm start.
    pub search_starts: usize,
    /// Smallest class the SSE refit accepts; `None` means `n_p + 2`.
    pub min_class_size: Option<usize>,
    pub kmeans_restarts: usize,
    pub kmeans_max_iter: usize,
    pub seed: u64,
}

impl Default for MisConfig {
    fn default() -> Self {
        MisConfig {
            alpha: 1e-3,
            beta: 1.0,
            svm_beta: 1.0,
            big_m: None,
            a_bar: None,
            milp: MilpOptions::default(),
            exact_milp_max_points: 40,
            search_starts: 8,
            min_class_size: None,
            kmeans_restarts: 10,
            kmeans_max_iter: 300,
            seed: 0,
        }
    }
}

impl MisConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("svm_beta", self.svm_beta)] {
            if !(v > 0.0) || !v.is_finite() {
                return invalid(format!("{name} must be positive, got {v}"));
            }
        }
        if let Some(m) = self.big_m {
            if !(m > 0.0) {
                return invalid(format!("big_m must be positive, got {m}"));
            }
        }
        if let Some(a) = self.a_bar {
            if !(a > 0.0) {
                return invalid(format!("a_bar must be positive, got {a}"));
            }
        }
        Ok(())
    }

    pub fn min_class(&self, np: usize) -> usize {
        self.min_class_size.unwrap_or(np + 2)
    }
}

/// Outcome of the labeling MILP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpSummary {
    pub status: Status,
    pub objective: f64,
    pub best_bound: f64,
    pub gap: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MisMeta {
    /// Final training objective of the returned models.
    pub objective: f64,
    /// Per-coordinate training bounding box, used by the continuity audit.
    pub bbox_lo: Vec<f64>,
    pub bbox_hi: Vec<f64>,
    /// Solver status per stage, e.g. `svm`, `stage1`, `qp`, `milp`.
    pub statuses: BTreeMap<String, Status>,
    /// Labeling objective at the warm start and at the chosen labels.
    pub label_objective_warm: Option<f64>,
    pub label_objective_final: Option<f64>,
    pub milp: Option<MilpSummary>,
    /// Rounds of the alternating label search.
    pub search_rounds: usize,
    /// True when the chosen labels emptied a class and a single OLSR model
    /// was returned instead.
    pub fallback: bool,
    pub rmse_model1: Option<f64>,
    pub rmse_model2: Option<f64>,
}

/// Two affine models switched by a hyperplane: model 1 where
/// `m^T w + w0 >= 0`, model 2 elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiModel {
    pub method: MisMethod,
    pub model1: LinearModel,
    pub model2: LinearModel,
    pub boundary: Hyperplane,
    pub labels: Labels,
    pub normalization: Option<NormalizationState>,
    pub meta: MisMeta,
}

#[derive(Serialize, Deserialize)]
struct MultiModelDoc {
    method: MisMethod,
    a1: Vec<f64>,
    a01: f64,
    a2: Vec<f64>,
    a02: f64,
    w: Vec<f64>,
    w0: f64,
    labels: Labels,
    normalization: Option<NormalizationState>,
    meta: MisMeta,
}

impl MultiModel {
    pub fn num_inputs(&self) -> usize {
        self.boundary.w.len()
    }

    /// `max(|a1 - a2 - w|_inf, |a01 - a02 - w0|)`.
    pub fn continuity_residual(&self) -> f64 {
        let da = (&self.model1.a - &self.model2.a - &self.boundary.w).amax();
        da.max((self.model1.a0 - self.model2.a0 - self.boundary.w0).abs())
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = MultiModelDoc {
            method: self.method,
            a1: self.model1.a.as_slice().to_vec(),
            a01: self.model1.a0,
            a2: self.model2.a.as_slice().to_vec(),
            a02: self.model2.a0,
            w: self.boundary.w.as_slice().to_vec(),
            w0: self.boundary.w0,
            labels: self.labels.clone(),
            normalization: self.normalization.clone(),
            meta: self.meta.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let d: MultiModelDoc = serde_json::from_str(text)?;
        let np = d.w.len();
        if d.a1.len() != np || d.a2.len() != np {
            return Err(Error::Dimension { expected: np, got: d.a1.len().min(d.a2.len()) });
        }
        let sub = |a: Vec<f64>, a0: f64, class: usize| LinearModel {
            a: DVector::from_vec(a),
            a0,
            provenance: Provenance::Mis { method: d.method.name().into(), class },
        };
        Ok(MultiModel {
            method: d.method,
            model1: sub(d.a1, d.a01, 1),
            model2: sub(d.a2, d.a02, 2),
            boundary: Hyperplane::new(DVector::from_vec(d.w), d.w0),
            labels: d.labels,
            normalization: d.normalization,
            meta: d.meta,
        })
    }
}

pub(crate) fn sub_model(a: DVector<f64>, a0: f64, method: MisMethod, class: usize) -> LinearModel {
    LinearModel { a, a0, provenance: Provenance::Mis { method: method.name().into(), class } }
}

pub(crate) fn bbox(x: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let lo = x.column_iter().map(|c| c.min()).collect();
    let hi = x.column_iter().map(|c| c.max()).collect();
    (lo, hi)
}

pub(crate) fn check_training(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension { expected: x.nrows(), got: y.len() });
    }
    if x.nrows() < 2 || x.ncols() == 0 {
        return invalid("multi-model training needs at least two rows and one input");
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return invalid("non-finite training data");
    }
    Ok(())
}

fn class_rmse(model: &LinearModel, x: &DMatrix<f64>, y: &DVector<f64>, rows: &[usize]) -> Option<f64> {
    if rows.is_empty() {
        return None;
    }
    let sse: f64 = rows.iter().map(|&i| (y[i] - model.predict_row(x.row(i).clone_owned().as_slice())).powi(2)).sum();
    Some((sse / rows.len() as f64).sqrt())
}

pub(crate) fn fill_class_rmse(mm: &mut MultiModel, x: &DMatrix<f64>, y: &DVector<f64>) {
    mm.meta.rmse_model1 = class_rmse(&mm.model1, x, y, &mm.labels.rows_of(1));
    mm.meta.rmse_model2 = class_rmse(&mm.model2, x, y, &mm.labels.rows_of(2));
}

/// k-means labels, a soft-margin SVM boundary and per-class OLSR. The two
/// models need not agree on the boundary.
pub fn train_mis_sota(x: &DMatrix<f64>, y: &DVector<f64>, cfg: &MisConfig) -> Result<MultiModel> {
    check_training(x, y)?;
    cfg.validate()?;
    let np = x.ncols();
    let labels = kmeans_label(x, 2, cfg.seed, cfg.kmeans_restarts, cfg.kmeans_max_iter)?;
    for c in 1..=2 {
        let size = labels.class_size(c);
        if size < np + 2 {
            return invalid(format!("cluster {c} has {size} points; OLSR needs at least {}", np + 2));
        }
    }
    let svm = train_linear_svm(x, &labels, cfg.svm_beta)?;
    let fit = |c: usize| -> Result<LinearModel> {
        let rows = labels.rows_of(c);
        let m = train_olsr(&x.select_rows(rows.iter()), &y.select_rows(rows.iter()))?;
        Ok(sub_model(m.a, m.a0, MisMethod::Sota, c))
    };
    let (model1, model2) = (fit(1)?, fit(2)?);
    let (bbox_lo, bbox_hi) = bbox(x);
    let mut meta = MisMeta { bbox_lo, bbox_hi, ..MisMeta::default() };
    meta.statuses.insert("svm".into(), svm.status);
    let mut mm = MultiModel {
        method: MisMethod::Sota,
        model1,
        model2,
        boundary: svm.hyperplane,
        labels,
        normalization: None,
        meta,
    };
    fill_class_rmse(&mut mm, x, y);
    let pred = predict_mis(&mm, x)?;
    mm.meta.objective = pred.iter().zip(y.iter()).map(|(p, t)| (t - p).powi(2)).sum();
    Ok(mm)
}

/// Classifies each row by the boundary and applies the selected model.
pub fn predict_mis(mm: &MultiModel, m: &DMatrix<f64>) -> Result<DVector<f64>> {
    let np = mm.num_inputs();
    if m.ncols() != np {
        return Err(Error::Dimension { expected: np, got: m.ncols() });
    }
    Ok(DVector::from_fn(m.nrows(), |i, _| {
        let row: Vec<f64> = m.row(i).iter().copied().collect();
        if mm.boundary.value(&row) >= 0.0 {
            mm.model1.predict_row(&row)
        } else {
            mm.model2.predict_row(&row)
        }
    }))
}

/// Largest disagreement between the two models over `probes` points on the
/// switching hyperplane. Points are drawn uniformly in the training
/// bounding box with the coordinate of largest `|w_j|` solved from the
/// hyperplane; draws leaving the box are retried, and after repeated misses
/// the unconstrained hyperplane point is used. Returns 0 when `w = 0`.
pub fn continuity_gap(mm: &MultiModel, probes: usize, seed: u64) -> Result<f64> {
    if probes == 0 {
        return invalid("probes must be at least 1");
    }
    let np = mm.num_inputs();
    let w = &mm.boundary.w;
    let pivot = w.iamax();
    if w[pivot] == 0.0 {
        return Ok(0.0);
    }
    let (lo, hi) = if mm.meta.bbox_lo.len() == np {
        (mm.meta.bbox_lo.clone(), mm.meta.bbox_hi.clone())
    } else {
        (vec![0.0; np], vec![1.0; np])
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gap: f64 = 0.0;
    let mut m = vec![0.0; np];
    for _ in 0..probes {
        for attempt in 0..100 {
            for j in 0..np {
                m[j] = lo[j] + (hi[j] - lo[j]) * rng.random::<f64>();
            }
            let rest: f64 = (0..np).filter(|&j| j != pivot).map(|j| w[j] * m[j]).sum();
            m[pivot] = -(mm.boundary.w0 + rest) / w[pivot];
            let span = (hi[pivot] - lo[pivot]).abs().max(1e-12);
            if (m[pivot] >= lo[pivot] - 1e-9 * span && m[pivot] <= hi[pivot] + 1e-9 * span) || attempt == 99 {
                break;
            }
        }
        gap = gap.max((mm.model1.predict_row(&m) - mm.model2.predict_row(&m)).abs());
    }
    Ok(gap)
}
