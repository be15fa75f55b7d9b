use nalgebra::{DMatrix, DVector};

use super::sae::solve_fixed_labels;
use super::{bbox, check_training, fill_class_rmse, sub_model, MisConfig, MisMeta, MisMethod, MultiModel};
use crate::classify::Hyperplane;
use crate::error::{invalid, Error, Result};
use crate::labeling::Labels;
use crate::optim::{solve_qp_with, QpOptions, QpProblem, Status, DEFAULT_TOL};

/// The fixed-label continuity QP
///
/// `min SSE1 + SSE2 + alpha ||w||^2 + beta sum e`
/// `s.t. s_i (m_i^T w + w0) >= 1 - e_i, e >= 0, a1 - a2 = w, a01 - a02 = w0`
///
/// over `x = (a1, a01, a2, a02, w, w0, e)`. The constant `sum y_i^2` is
/// dropped from the QP objective and returned separately.
pub fn con_qp(x: &DMatrix<f64>, y: &DVector<f64>, z: &[bool], alpha: f64, beta: f64) -> (QpProblem, f64) {
    let (n, np) = x.shape();
    let (i2, iw, ie) = (np + 1, 2 * np + 2, 3 * np + 3);
    let nv = ie + n;
    let mut q = DMatrix::zeros(nv, nv);
    let mut c = DVector::zeros(nv);
    let mut phi = vec![0.0; np + 1];
    for i in 0..n {
        let base = if z[i] { 0 } else { i2 };
        for j in 0..np {
            phi[j] = x[(i, j)];
        }
        phi[np] = 1.0;
        for r in 0..=np {
            c[base + r] -= 2.0 * y[i] * phi[r];
            for s in 0..=np {
                q[(base + r, base + s)] += 2.0 * phi[r] * phi[s];
            }
        }
    }
    for j in 0..np {
        q[(iw + j, iw + j)] = 2.0 * alpha;
    }
    c.rows_mut(ie, n).fill(beta);
    let mut g = DMatrix::zeros(n, nv);
    for i in 0..n {
        let s = if z[i] { 1.0 } else { -1.0 };
        for j in 0..np {
            g[(i, iw + j)] = -s * x[(i, j)];
        }
        g[(i, iw + np)] = -s;
        g[(i, ie + i)] = -1.0;
    }
    let h = DVector::from_element(n, -1.0);
    let mut a = DMatrix::zeros(np + 1, nv);
    for r in 0..=np {
        a[(r, r)] = 1.0;
        a[(r, i2 + r)] = -1.0;
        a[(r, iw + r)] = -1.0;
    }
    let mut lower = DVector::from_element(nv, f64::NEG_INFINITY);
    lower.rows_mut(ie, n).fill(0.0);
    let upper = DVector::from_element(nv, f64::INFINITY);
    let p = QpProblem::new(q, c)
        .with_inequalities(g, h)
        .with_equalities(a, DVector::zeros(np + 1))
        .with_bounds(lower, upper);
    (p, y.norm_squared())
}

/// Continuous two-model sensor for fixed labels. An absolute-error LP
/// provides the starting point; the squared-error QP gives the result.
pub fn train_mis_con(x: &DMatrix<f64>, y: &DVector<f64>, labels: &Labels, cfg: &MisConfig) -> Result<MultiModel> {
    check_training(x, y)?;
    cfg.validate()?;
    let (n, np) = x.shape();
    if labels.k != 2 || labels.assignment.len() != n {
        return invalid("continuous MIS needs a two-class labeling of every training row");
    }
    for c in 1..=2 {
        if labels.class_size(c) < 2 {
            return invalid(format!("class {c} has fewer than 2 points"));
        }
    }
    let z = labels.to_binary();
    let stage1 = solve_fixed_labels(x, y, &z, cfg.alpha, cfg.beta)?;

    let (qp, constant) = con_qp(x, y, &z, cfg.alpha, cfg.beta);
    let t = &stage1.theta;
    let mut x0 = Vec::with_capacity(qp.num_vars());
    x0.extend(t.a1.iter());
    x0.push(t.a01);
    x0.extend(t.a2().iter());
    x0.push(t.a02());
    x0.extend(t.w.iter());
    x0.push(t.w0);
    x0.extend(stage1.slacks.iter());
    let opts = QpOptions { tol: DEFAULT_TOL, initial: Some(DVector::from_vec(x0)), ..QpOptions::default() };
    let sol = solve_qp_with(&qp, &opts)?;
    if sol.status != Status::Optimal {
        return Err(Error::Solver(format!("continuity QP ended with status {:?}", sol.status)));
    }
    let v = &sol.x;
    let (i2, iw) = (np + 1, 2 * np + 2);
    let model1 = sub_model(DVector::from_column_slice(&v[..np]), v[np], MisMethod::Con, 1);
    let model2 = sub_model(DVector::from_column_slice(&v[i2..i2 + np]), v[i2 + np], MisMethod::Con, 2);
    let boundary = Hyperplane::new(DVector::from_column_slice(&v[iw..iw + np]), v[iw + np]);
    let (bbox_lo, bbox_hi) = bbox(x);
    let mut meta = MisMeta { objective: sol.objective + constant, bbox_lo, bbox_hi, ..MisMeta::default() };
    meta.statuses.insert("stage1".into(), Status::Optimal);
    meta.statuses.insert("qp".into(), sol.status);
    let mut mm = MultiModel {
        method: MisMethod::Con,
        model1,
        model2,
        boundary,
        labels: labels.clone(),
        normalization: None,
        meta,
    };
    fill_class_rmse(&mut mm, x, y);
    Ok(mm)
}
