//! The labeling objective `SAE1 + SAE2 + alpha ||w||_1 + beta ||e||_1` with
//! fixed labels. Under the continuity equalities the free parameters are
//! `theta = (a1, a01, w, w0)` with `a2 = a1 - w`, `a02 = a01 - w0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::optim::{solve_lp, LpProblem, RowSense, Status, DEFAULT_TOL};

/// Continuous parameters of a continuous two-model sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Theta {
    pub a1: DVector<f64>,
    pub a01: f64,
    pub w: DVector<f64>,
    pub w0: f64,
}

impl Theta {
    pub fn zeros(np: usize) -> Self {
        Theta { a1: DVector::zeros(np), a01: 0.0, w: DVector::zeros(np), w0: 0.0 }
    }

    pub fn a2(&self) -> DVector<f64> {
        &self.a1 - &self.w
    }

    pub fn a02(&self) -> f64 {
        self.a01 - self.w0
    }

    /// Model-1 prediction, model-2 prediction and boundary value at row `i`.
    pub(crate) fn eval(&self, x: &DMatrix<f64>, i: usize) -> (f64, f64, f64) {
        let mut p1 = self.a01;
        let mut v = self.w0;
        for j in 0..x.ncols() {
            p1 += x[(i, j)] * self.a1[j];
            v += x[(i, j)] * self.w[j];
        }
        // Model 2 is model 1 minus the boundary function.
        (p1, p1 - v, v)
    }
}

/// Contribution of point `i` to the objective under label `z`.
pub(crate) fn point_cost(y: f64, p1: f64, p2: f64, v: f64, z: bool, beta: f64) -> f64 {
    if z {
        (y - p1).abs() + beta * (1.0 - v).max(0.0)
    } else {
        (y - p2).abs() + beta * (1.0 + v).max(0.0)
    }
}

/// Objective value at given labels and parameters.
pub fn sae_objective(x: &DMatrix<f64>, y: &DVector<f64>, z: &[bool], theta: &Theta, alpha: f64, beta: f64) -> f64 {
    let mut total = alpha * theta.w.iter().map(|v| v.abs()).sum::<f64>();
    for i in 0..x.nrows() {
        let (p1, p2, v) = theta.eval(x, i);
        total += point_cost(y[i], p1, p2, v, z[i], beta);
    }
    total
}

/// Optimal parameters for fixed labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SaeFit {
    pub theta: Theta,
    pub objective: f64,
    /// Margin slacks `e_i = max(0, 1 - s_i (m_i^T w + w0))`.
    pub slacks: Vec<f64>,
}

/// Solves the fixed-label problem through its LP dual
///
/// `max sum y_i l_i + sum u_i  s.t.  sum l_i phi_i + sum u_i psi_i = alpha E nu`
///
/// with `l in [-1, 1]`, `u in [0, beta]`, `nu in [-1, 1]`, where `phi_i` is
/// the regressor of point `i` under its model and `psi_i` its signed margin
/// regressor. The dual has one row per parameter and about `2n` columns,
/// and the parameters are recovered as the negated shadow prices.
pub fn solve_fixed_labels(x: &DMatrix<f64>, y: &DVector<f64>, z: &[bool], alpha: f64, beta: f64) -> Result<SaeFit> {
    let (n, np) = x.shape();
    if z.len() != n || y.len() != n {
        return Err(Error::Dimension { expected: n, got: z.len().min(y.len()) });
    }
    // Parameter layout: a1 (np), a01, w (np), w0.
    let dim = 2 * np + 2;
    let iw = np + 1;
    let nv = 2 * n + np;
    let mut c = DVector::zeros(nv);
    let mut a = DMatrix::zeros(dim, nv);
    for i in 0..n {
        c[i] = -y[i];
        c[n + i] = -1.0;
        for j in 0..np {
            a[(j, i)] = x[(i, j)];
        }
        a[(np, i)] = 1.0;
        let s = if z[i] { 1.0 } else { -1.0 };
        if !z[i] {
            for j in 0..np {
                a[(iw + j, i)] = -x[(i, j)];
            }
            a[(iw + np, i)] = -1.0;
        }
        for j in 0..np {
            a[(iw + j, n + i)] = s * x[(i, j)];
        }
        a[(iw + np, n + i)] = s;
    }
    for j in 0..np {
        a[(iw + j, 2 * n + j)] = -alpha;
    }
    let mut lower = DVector::zeros(nv);
    let mut upper = DVector::zeros(nv);
    for i in 0..n {
        lower[i] = -1.0;
        upper[i] = 1.0;
        upper[n + i] = beta;
    }
    for j in 0..np {
        lower[2 * n + j] = -1.0;
        upper[2 * n + j] = 1.0;
    }
    let lp = LpProblem {
        objective: c,
        matrix: a,
        rhs: DVector::zeros(dim),
        senses: vec![RowSense::Eq; dim],
        lower,
        upper,
    };
    let sol = solve_lp(&lp, DEFAULT_TOL)?;
    if sol.status != Status::Optimal {
        return Err(Error::Solver(format!("fixed-label LP ended with status {:?}", sol.status)));
    }
    let theta = Theta {
        a1: DVector::from_fn(np, |j, _| -sol.duals[j]),
        a01: -sol.duals[np],
        w: DVector::from_fn(np, |j, _| -sol.duals[iw + j]),
        w0: -sol.duals[iw + np],
    };
    let objective = sae_objective(x, y, z, &theta, alpha, beta);
    let slacks = (0..n)
        .map(|i| {
            let v = theta.eval(x, i).2;
            let s = if z[i] { 1.0 } else { -1.0 };
            (1.0 - s * v).max(0.0)
        })
        .collect();
    if (objective + sol.objective).abs() > 1e-6 * objective.abs().max(1.0) {
        log::debug!("fixed-label dual gap {} vs {}", objective, -sol.objective);
    }
    Ok(SaeFit { theta, objective, slacks })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Primal epigraph form of the same problem.
    fn primal(x: &DMatrix<f64>, y: &DVector<f64>, z: &[bool], alpha: f64, beta: f64) -> f64 {
        let (n, np) = x.shape();
        let dim = 2 * np + 2;
        let (it, ie, iu) = (dim, dim + n, dim + 2 * n);
        let nv = iu + np;
        let mut c = DVector::zeros(nv);
        c.rows_mut(it, n).fill(1.0);
        c.rows_mut(ie, n).fill(beta);
        c.rows_mut(iu, np).fill(alpha);
        let mut lp = LpProblem::new(c);
        for j in 0..dim {
            lp.set_bounds(j, f64::NEG_INFINITY, f64::INFINITY);
        }
        let mut rows = Vec::new();
        for i in 0..n {
            // prediction = phi . theta
            let mut phi: Vec<(usize, f64)> = (0..np).map(|j| (j, x[(i, j)])).collect();
            phi.push((np, 1.0));
            if !z[i] {
                phi.extend((0..np).map(|j| (np + 1 + j, -x[(i, j)])));
                phi.push((2 * np + 1, -1.0));
            }
            let mut up = phi.clone();
            up.push((it + i, 1.0));
            rows.push((up, RowSense::Ge, y[i]));
            let mut down: Vec<(usize, f64)> = phi.iter().map(|&(j, v)| (j, -v)).collect();
            down.push((it + i, 1.0));
            rows.push((down, RowSense::Ge, -y[i]));
            let s = if z[i] { 1.0 } else { -1.0 };
            let mut m: Vec<(usize, f64)> = (0..np).map(|j| (np + 1 + j, s * x[(i, j)])).collect();
            m.push((2 * np + 1, s));
            m.push((ie + i, 1.0));
            rows.push((m, RowSense::Ge, 1.0));
        }
        for j in 0..np {
            rows.push((vec![(iu + j, 1.0), (np + 1 + j, -1.0)], RowSense::Ge, 0.0));
            rows.push((vec![(iu + j, 1.0), (np + 1 + j, 1.0)], RowSense::Ge, 0.0));
        }
        let s = solve_lp(&lp.with_sparse_rows(rows), 1e-9).unwrap();
        assert_eq!(s.status, Status::Optimal);
        s.objective
    }

    #[test]
    fn dual_route_matches_primal_epigraph() {
        for seed in 0..6u64 {
            let n = 9;
            let x = DMatrix::from_fn(n, 2, |i, j| (((i as u64 * 37 + j as u64 * 11 + seed * 7) % 19) as f64) / 19.0);
            let y = DVector::from_fn(n, |i, _| x[(i, 0)].powi(2) + 0.3 * x[(i, 1)]);
            let z: Vec<bool> = (0..n).map(|i| (i as u64 + seed) % 3 != 0).collect();
            for &(alpha, beta) in &[(1e-3, 1.0), (0.1, 0.05), (1.0, 1e-4)] {
                let fit = solve_fixed_labels(&x, &y, &z, alpha, beta).unwrap();
                let p = primal(&x, &y, &z, alpha, beta);
                assert!((fit.objective - p).abs() < 1e-8 * p.max(1.0), "seed {seed}: {} vs {p}", fit.objective);
            }
        }
    }
}
