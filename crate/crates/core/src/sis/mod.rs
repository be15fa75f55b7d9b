//! Single-model linear sensors `y = m^T a + a0` and their trainers.

mod components;
mod cv;
mod lasso;
mod subset;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use components::{train_pcr, train_plsr, ComponentConfig};
pub use cv::{cross_validate, Complexity, CvResult};
pub use lasso::{lasso_objective, train_lasso, LassoConfig};
pub use subset::{train_subset_selection, SubsetConfig, SubsetMode, MAX_ENUMERATED_SUPPORTS};

/// How a model was obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Olsr,
    Lasso { lambda: f64, refit: bool },
    Pcr { n_pc: usize },
    Plsr { n_pc: usize },
    Subset { n_p_tilde: usize, a_bar: f64, mode: SubsetMode, support: Vec<usize> },
    /// Sub-model of a multi-model sensor.
    Mis { method: String, class: usize },
    Manual,
}

/// Affine sensor `y = m^T a + a0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub a: DVector<f64>,
    pub a0: f64,
    pub provenance: Provenance,
}

impl LinearModel {
    pub fn new(a: DVector<f64>, a0: f64) -> Self {
        LinearModel { a, a0, provenance: Provenance::Manual }
    }

    pub fn num_inputs(&self) -> usize {
        self.a.len()
    }

    /// Indices of the nonzero coefficients.
    pub fn support(&self) -> Vec<usize> {
        (0..self.a.len()).filter(|&j| self.a[j] != 0.0).collect()
    }

    pub fn predict_row(&self, m: &[f64]) -> f64 {
        self.a.iter().zip(m).map(|(a, x)| a * x).sum::<f64>() + self.a0
    }
}

/// `M a + a0` row by row.
pub fn predict_linear(model: &LinearModel, m: &DMatrix<f64>) -> Result<DVector<f64>> {
    if m.ncols() != model.a.len() {
        return Err(Error::Dimension { expected: model.a.len(), got: m.ncols() });
    }
    Ok(m * &model.a + DVector::repeat(m.nrows(), model.a0))
}

pub(crate) fn check_xy(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::Dimension { expected: x.nrows(), got: y.len() });
    }
    if x.nrows() == 0 || x.ncols() == 0 {
        return invalid("empty regression problem");
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return invalid("non-finite regression data");
    }
    Ok(())
}

/// Column means and the centered copy of `x`.
pub(crate) fn center(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let mean = DVector::from_fn(x.ncols(), |j, _| x.column(j).mean());
    let mut xc = x.clone();
    for (j, mut col) in xc.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    (mean, xc)
}

/// Numerical rank threshold for singular values.
pub(crate) fn rank_tol(s: &DVector<f64>, shape: (usize, usize)) -> f64 {
    s.max() * shape.0.max(shape.1) as f64 * f64::EPSILON * 10.0
}

/// Least squares on centered data via the SVD; fails when the centered
/// regressors are rank deficient.
fn olsr_coefficients(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let (xm, xc) = center(x);
    let ym = y.mean();
    let yc = y.add_scalar(-ym);
    let svd = xc.svd(true, true);
    let tol = rank_tol(&svd.singular_values, x.shape());
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if rank < x.ncols() {
        return Err(Error::RankDeficient { rank, cols: x.ncols() });
    }
    let a = svd.solve(&yc, tol).map_err(|e| Error::Solver(e.to_string()))?;
    let a0 = ym - xm.dot(&a);
    Ok((a, a0))
}

/// Ordinary least squares with an unpenalized offset.
pub fn train_olsr(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LinearModel> {
    check_xy(x, y)?;
    if x.nrows() <= x.ncols() {
        return invalid(format!("OLSR needs more than {} rows, got {}", x.ncols(), x.nrows()));
    }
    let (a, a0) = olsr_coefficients(x, y)?;
    Ok(LinearModel { a, a0, provenance: Provenance::Olsr })
}

/// OLSR on a subset of columns, expanded back to full length with zeros.
pub(crate) fn olsr_on_support(x: &DMatrix<f64>, y: &DVector<f64>, support: &[usize]) -> Result<(DVector<f64>, f64)> {
    let mut a = DVector::zeros(x.ncols());
    if support.is_empty() {
        return Ok((a, y.mean()));
    }
    if x.nrows() <= support.len() {
        return invalid(format!("OLSR needs more than {} rows, got {}", support.len(), x.nrows()));
    }
    let xs = x.select_columns(support.iter());
    let (b, a0) = olsr_coefficients(&xs, y)?;
    for (k, &j) in support.iter().enumerate() {
        a[j] = b[k];
    }
    Ok((a, a0))
}

pub(crate) fn sse(model_a: &DVector<f64>, a0: f64, x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    (x * model_a).iter().zip(y.iter()).map(|(p, t)| (t - p - a0).powi(2)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = DMatrix::from_column_slice(5, 1, &[0.0, 1.0, 2.0, 3.0, 4.0]);
        let y = x.column(0).map(|v| 2.0 * v + 1.0);
        let m = train_olsr(&x, &y).unwrap();
        assert!((m.a[0] - 2.0).abs() < 1e-12 && (m.a0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_output() {
        let x = DMatrix::from_fn(6, 2, |i, j| ((i * 7 + j * 3) % 5) as f64);
        let y = DVector::repeat(6, 4.5);
        let m = train_olsr(&x, &y).unwrap();
        assert!(m.a.amax() < 1e-12 && (m.a0 - 4.5).abs() < 1e-12);
    }

    #[test]
    fn collinear_columns_are_rank_deficient() {
        let x = DMatrix::from_fn(6, 2, |i, j| (i as f64) * (j as f64 + 1.0));
        let y = DVector::from_fn(6, |i, _| i as f64);
        assert!(matches!(train_olsr(&x, &y), Err(Error::RankDeficient { rank: 1, cols: 2 })));
    }

    #[test]
    fn prediction() {
        let m = LinearModel::new(DVector::from_vec(vec![1.0, 1.0]), 0.0);
        let p = predict_linear(&m, &DMatrix::from_row_slice(1, 2, &[2.0, 3.0])).unwrap();
        assert_eq!(p[0], 5.0);
        assert!(predict_linear(&m, &DMatrix::zeros(1, 3)).is_err());
        let c = LinearModel::new(DVector::zeros(2), 3.0);
        assert_eq!(predict_linear(&c, &DMatrix::zeros(4, 2)).unwrap(), DVector::repeat(4, 3.0));
    }
}
