use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{center, check_xy, rank_tol, LinearModel, Provenance};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentConfig {
    pub n_pc: usize,
}

fn check_components(x: &DMatrix<f64>, n_pc: usize) -> Result<()> {
    if n_pc == 0 || n_pc > x.ncols() {
        return invalid(format!("n_pc must lie in 1..={}, got {n_pc}", x.ncols()));
    }
    Ok(())
}

/// Principal component regression: OLSR on the scores of the leading
/// `n_pc` right singular vectors of the centered inputs, folded back to
/// input coordinates.
pub fn train_pcr(x: &DMatrix<f64>, y: &DVector<f64>, cfg: &ComponentConfig) -> Result<LinearModel> {
    check_xy(x, y)?;
    check_components(x, cfg.n_pc)?;
    let (xm, xc) = center(x);
    let ym = y.mean();
    let yc = y.add_scalar(-ym);
    let svd = xc.svd(true, true);
    let tol = rank_tol(&svd.singular_values, x.shape());
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if cfg.n_pc > rank {
        return Err(Error::RankDeficient { rank, cols: cfg.n_pc });
    }
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    // nalgebra does not sort singular values; pick the largest explicitly.
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]).then(i.cmp(&j)));
    let mut a = DVector::zeros(x.ncols());
    for &k in &order[..cfg.n_pc] {
        let b = u.column(k).dot(&yc) / svd.singular_values[k];
        a.axpy(b, &vt.row(k).transpose(), 1.0);
    }
    let a0 = ym - xm.dot(&a);
    Ok(LinearModel { a, a0, provenance: Provenance::Pcr { n_pc: cfg.n_pc } })
}

/// Partial least squares (PLS1) by NIPALS deflation. With a single output
/// the weight vector of each component is `X^T y / ||X^T y||` exactly, so
/// the inner power iteration converges in one step.
pub fn train_plsr(x: &DMatrix<f64>, y: &DVector<f64>, cfg: &ComponentConfig) -> Result<LinearModel> {
    check_xy(x, y)?;
    check_components(x, cfg.n_pc)?;
    let (xm, mut xk) = center(x);
    let ym = y.mean();
    let mut yk = y.add_scalar(-ym);
    let np = x.ncols();
    let scale = xk.norm() * yk.norm();
    let mut w_mat = DMatrix::zeros(np, cfg.n_pc);
    let mut p_mat = DMatrix::zeros(np, cfg.n_pc);
    let mut q = DVector::zeros(cfg.n_pc);
    let mut used = 0;
    for k in 0..cfg.n_pc {
        let w = xk.tr_mul(&yk);
        let wn = w.norm();
        // y is already fully explained within the span of X.
        if wn <= 1e-13 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        let w = w / wn;
        let t = &xk * &w;
        let tt = t.norm_squared();
        if tt <= 1e-26 * scale.max(f64::MIN_POSITIVE) {
            break;
        }
        let p = xk.tr_mul(&t) / tt;
        let qk = yk.dot(&t) / tt;
        xk -= &t * p.transpose();
        yk.axpy(-qk, &t, 1.0);
        w_mat.set_column(k, &w);
        p_mat.set_column(k, &p);
        q[k] = qk;
        used += 1;
    }
    let a = if used == 0 {
        DVector::zeros(np)
    } else {
        let w = w_mat.columns(0, used).into_owned();
        let pw = p_mat.columns(0, used).tr_mul(&w);
        let inner = pw
            .lu()
            .solve(&q.rows(0, used).into_owned())
            .ok_or_else(|| Error::Solver("singular PLS loading matrix".into()))?;
        w * inner
    };
    let a0 = ym - xm.dot(&a);
    Ok(LinearModel { a, a0, provenance: Provenance::Plsr { n_pc: cfg.n_pc } })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn component_count_is_checked() {
        let x = DMatrix::from_fn(8, 2, |i, j| (i * (j + 1)) as f64 + (j * i * i) as f64);
        let y = DVector::from_fn(8, |i, _| i as f64);
        assert!(train_pcr(&x, &y, &ComponentConfig { n_pc: 3 }).is_err());
        assert!(train_plsr(&x, &y, &ComponentConfig { n_pc: 0 }).is_err());
    }

    #[test]
    fn pcr_rank_limit() {
        let x = DMatrix::from_fn(8, 2, |i, j| (i as f64) * (j as f64 + 1.0));
        let y = DVector::from_fn(8, |i, _| i as f64);
        assert!(matches!(train_pcr(&x, &y, &ComponentConfig { n_pc: 2 }), Err(Error::RankDeficient { .. })));
        assert!(train_pcr(&x, &y, &ComponentConfig { n_pc: 1 }).is_ok());
    }
}
