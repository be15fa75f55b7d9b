//! Linear soft-margin SVM and the switching rule between sub-models.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::labeling::Labels;
use crate::optim::{solve_qp, QpProblem, Status, DEFAULT_TOL};

/// Separating hyperplane `m^T w + w0 = 0`; class 1 lies on the nonnegative
/// side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperplane {
    pub w: DVector<f64>,
    pub w0: f64,
}

impl Hyperplane {
    pub fn new(w: DVector<f64>, w0: f64) -> Self {
        Hyperplane { w, w0 }
    }

    pub fn value(&self, m: &[f64]) -> f64 {
        self.w.iter().zip(m).map(|(a, b)| a * b).sum::<f64>() + self.w0
    }
}

/// Class 1 iff `m^T w + w0 >= 0`, so points on the boundary go to class 1.
pub fn classify_point(h: &Hyperplane, m: &[f64]) -> Result<usize> {
    if m.len() != h.w.len() {
        return Err(Error::Dimension { expected: h.w.len(), got: m.len() });
    }
    Ok(if h.value(m) >= 0.0 { 1 } else { 2 })
}

/// Training result with the per-point slacks `e`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmFit {
    pub hyperplane: Hyperplane,
    pub slacks: Vec<f64>,
    pub objective: f64,
    pub status: Status,
}

/// `min ||w||^2 + beta * sum e  s.t.  s_i (m_i^T w + w0) >= 1 - e_i, e >= 0`
/// with `s_i = +1` for class 1 and `-1` for class 2.
pub fn train_linear_svm(x: &DMatrix<f64>, labels: &Labels, beta: f64) -> Result<SvmFit> {
    let (n, np) = x.shape();
    if labels.k != 2 {
        return invalid(format!("linear SVM needs exactly two classes, got {}", labels.k));
    }
    if labels.assignment.len() != n {
        return Err(Error::Dimension { expected: n, got: labels.assignment.len() });
    }
    labels.validate()?;
    if !(beta > 0.0) || !beta.is_finite() {
        return invalid(format!("beta must be positive, got {beta}"));
    }
    // Variables: w (np), w0, e (n).
    let nv = np + 1 + n;
    let mut q = DMatrix::zeros(nv, nv);
    for j in 0..np {
        q[(j, j)] = 2.0;
    }
    let mut c = DVector::zeros(nv);
    c.rows_mut(np + 1, n).fill(beta);
    let mut g = DMatrix::zeros(n, nv);
    let h = DVector::from_element(n, -1.0);
    for i in 0..n {
        let s = if labels.assignment[i] == 1 { 1.0 } else { -1.0 };
        for j in 0..np {
            g[(i, j)] = -s * x[(i, j)];
        }
        g[(i, np)] = -s;
        g[(i, np + 1 + i)] = -1.0;
    }
    let mut lower = DVector::from_element(nv, f64::NEG_INFINITY);
    lower.rows_mut(np + 1, n).fill(0.0);
    let upper = DVector::from_element(nv, f64::INFINITY);
    let p = QpProblem::new(q, c).with_inequalities(g, h).with_bounds(lower, upper);
    let sol = solve_qp(&p, DEFAULT_TOL)?;
    if sol.status != Status::Optimal {
        return Err(Error::Solver(format!("SVM QP ended with status {:?}", sol.status)));
    }
    let w = DVector::from_column_slice(&sol.x[..np]);
    Ok(SvmFit {
        hyperplane: Hyperplane { w, w0: sol.x[np] },
        slacks: sol.x[np + 1..].to_vec(),
        objective: sol.objective,
        status: sol.status,
    })
}
