use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{center, check_xy, olsr_on_support, LinearModel, Provenance};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoConfig {
    pub lambda: f64,
    /// Re-run OLSR on the selected inputs.
    pub refit: bool,
}

impl LassoConfig {
    pub fn new(lambda: f64) -> Self {
        LassoConfig { lambda, refit: true }
    }
}

const MAX_SWEEPS: usize = 100_000;
const STEP_TOL: f64 = 1e-8;

/// `0.5 * SSE + lambda * ||a||_1`.
pub fn lasso_objective(x: &DMatrix<f64>, y: &DVector<f64>, a: &DVector<f64>, a0: f64, lambda: f64) -> f64 {
    0.5 * super::sse(a, a0, x, y) + lambda * a.iter().map(|v| v.abs()).sum::<f64>()
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// One cyclic pass over the coordinates of the centered problem. Keeps the
/// residual `r` in sync with `a` and returns the largest coefficient move.
fn sweep(xc: &DMatrix<f64>, norms: &[f64], r: &mut DVector<f64>, a: &mut DVector<f64>, lambda: f64) -> f64 {
    let mut max_step: f64 = 0.0;
    for j in 0..xc.ncols() {
        if norms[j] == 0.0 {
            continue;
        }
        let col = xc.column(j);
        let rho = col.dot(r) + norms[j] * a[j];
        let new = soft_threshold(rho, lambda) / norms[j];
        let step = new - a[j];
        if step != 0.0 {
            r.axpy(-step, &col, 1.0);
            a[j] = new;
            max_step = max_step.max(step.abs());
        }
    }
    max_step
}

/// Cyclic coordinate descent on the centered problem, which eliminates the
/// unpenalized offset exactly. Stops when no coefficient moves by more than
/// `1e-8`.
pub(crate) fn lasso_path_point(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> (DVector<f64>, f64, usize) {
    let (xm, xc) = center(x);
    let ym = y.mean();
    let mut r = y.add_scalar(-ym);
    let norms: Vec<f64> = xc.column_iter().map(|c| c.norm_squared()).collect();
    let mut a: DVector<f64> = DVector::zeros(x.ncols());
    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        if sweep(&xc, &norms, &mut r, &mut a, lambda) < STEP_TOL {
            break;
        }
    }
    let a0 = ym - xm.dot(&a);
    (a, a0, sweeps)
}

/// LASSO, optionally followed by an OLSR refit on the nonzero inputs.
pub fn train_lasso(x: &DMatrix<f64>, y: &DVector<f64>, cfg: &LassoConfig) -> Result<LinearModel> {
    check_xy(x, y)?;
    if !(cfg.lambda >= 0.0) || !cfg.lambda.is_finite() {
        return invalid(format!("lambda must be nonnegative, got {}", cfg.lambda));
    }
    let (mut a, mut a0, _) = lasso_path_point(x, y, cfg.lambda);
    if cfg.refit {
        let support: Vec<usize> = (0..a.len()).filter(|&j| a[j] != 0.0).collect();
        (a, a0) = olsr_on_support(x, y, &support)?;
    }
    Ok(LinearModel { a, a0, provenance: Provenance::Lasso { lambda: cfg.lambda, refit: cfg.refit } })
}
