//! Convex QP: Mehrotra predictor-corrector interior point, followed by an
//! active-set polish that re-solves the equality-constrained problem on the
//! identified active set so returned points satisfy equalities and
//! complementarity to round-off.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Solution, Status, DEFAULT_TOL};
use crate::error::{invalid, Result};

/// `min 1/2 x^T Q x + c^T x  s.t.  A x = b,  G x <= h,  lower <= x <= upper`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QpProblem {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub ineq_matrix: DMatrix<f64>,
    pub ineq_rhs: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl QpProblem {
    /// Unconstrained problem with free variables.
    pub fn new(q: DMatrix<f64>, c: DVector<f64>) -> Self {
        let n = c.len();
        Self {
            q,
            c,
            eq_matrix: DMatrix::zeros(0, n),
            eq_rhs: DVector::zeros(0),
            ineq_matrix: DMatrix::zeros(0, n),
            ineq_rhs: DVector::zeros(0),
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.eq_matrix = a;
        self.eq_rhs = b;
        self
    }

    pub fn with_inequalities(mut self, g: DMatrix<f64>, h: DVector<f64>) -> Self {
        self.ineq_matrix = g;
        self.ineq_rhs = h;
        self
    }

    pub fn with_bounds(mut self, lower: DVector<f64>, upper: DVector<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn objective_value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.c.dot(x)
    }

    /// Dimension checks plus symmetry and positive semidefiniteness. PSD is
    /// tested by a Cholesky factorization of `Q + 1e-9 (1 + max|Q_ii|) I`.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        if self.q.nrows() != n || self.q.ncols() != n {
            return invalid("Q must be n x n");
        }
        if self.eq_matrix.ncols() != n || self.eq_matrix.nrows() != self.eq_rhs.len() {
            return invalid("equality block has inconsistent dimensions");
        }
        if self.ineq_matrix.ncols() != n || self.ineq_matrix.nrows() != self.ineq_rhs.len() {
            return invalid("inequality block has inconsistent dimensions");
        }
        if self.lower.len() != n || self.upper.len() != n {
            return invalid("bound vectors have the wrong length");
        }
        let finite = self
            .q
            .iter()
            .chain(self.c.iter())
            .chain(self.eq_matrix.iter())
            .chain(self.eq_rhs.iter())
            .chain(self.ineq_matrix.iter())
            .chain(self.ineq_rhs.iter())
            .all(|v| v.is_finite());
        if !finite {
            return invalid("QP coefficients must be finite");
        }
        for j in 0..n {
            if self.lower[j] > self.upper[j] || self.lower[j] == f64::INFINITY || self.upper[j] == f64::NEG_INFINITY {
                return invalid(format!("variable {j} has empty bounds"));
            }
        }
        let scale = 1.0 + self.q.amax();
        for i in 0..n {
            for j in 0..i {
                if (self.q[(i, j)] - self.q[(j, i)]).abs() > 1e-12 * scale {
                    return invalid("Q must be symmetric");
                }
            }
        }
        let diag_max = (0..n).map(|i| self.q[(i, i)].abs()).fold(0.0, f64::max);
        let shifted = &self.q + DMatrix::identity(n, n) * (1e-9 * (1.0 + diag_max));
        if shifted.cholesky().is_none() {
            return invalid("Q must be positive semidefinite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct QpOptions {
    pub tol: f64,
    pub max_iterations: usize,
    /// Optional starting point for the interior-point iterations.
    pub initial: Option<DVector<f64>>,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iterations: 200,
            initial: None,
        }
    }
}

/// One inequality row `g^T x <= h` kept sparse.
#[derive(Debug, Clone)]
struct Row {
    idx: Vec<usize>,
    val: Vec<f64>,
    rhs: f64,
    /// `Some((j, is_upper))` for rows generated from variable bounds
    bound: Option<(usize, bool)>,
}

impl Row {
    fn dot(&self, x: &DVector<f64>) -> f64 {
        self.idx.iter().zip(&self.val).map(|(&j, &v)| v * x[j]).sum()
    }
}

fn collect_rows(p: &QpProblem) -> Vec<Row> {
    let n = p.num_vars();
    let mut rows = Vec::new();
    for i in 0..p.ineq_matrix.nrows() {
        let mut idx = Vec::new();
        let mut val = Vec::new();
        for j in 0..n {
            let v = p.ineq_matrix[(i, j)];
            if v != 0.0 {
                idx.push(j);
                val.push(v);
            }
        }
        rows.push(Row { idx, val, rhs: p.ineq_rhs[i], bound: None });
    }
    for j in 0..n {
        if p.upper[j].is_finite() {
            rows.push(Row { idx: vec![j], val: vec![1.0], rhs: p.upper[j], bound: Some((j, true)) });
        }
        if p.lower[j].is_finite() {
            rows.push(Row { idx: vec![j], val: vec![-1.0], rhs: -p.lower[j], bound: Some((j, false)) });
        }
    }
    rows
}

struct Residuals {
    dual: DVector<f64>,
    eq: DVector<f64>,
    ineq: DVector<f64>,
}

fn residuals(p: &QpProblem, rows: &[Row], x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>, s: &DVector<f64>) -> Residuals {
    let mut dual = &p.q * x + &p.c - p.eq_matrix.transpose() * y;
    for (r, row) in rows.iter().enumerate() {
        for (&j, &v) in row.idx.iter().zip(&row.val) {
            dual[j] += v * z[r];
        }
    }
    let eq = &p.eq_matrix * x - &p.eq_rhs;
    let ineq = DVector::from_iterator(rows.len(), rows.iter().enumerate().map(|(r, row)| row.dot(x) + s[r] - row.rhs));
    Residuals { dual, eq, ineq }
}

/// Largest KKT residual at `(x, y, z)` with inequality slacks recomputed from `x`.
fn kkt_residual(p: &QpProblem, rows: &[Row], x: &DVector<f64>, y: &DVector<f64>, z: &DVector<f64>) -> (f64, f64) {
    let slack = DVector::from_iterator(rows.len(), rows.iter().map(|row| row.rhs - row.dot(x)));
    let res = residuals(p, rows, x, y, z, &slack);
    let primal = res
        .eq
        .amax()
        .max(slack.iter().fold(0.0f64, |a, &v| a.max(-v)));
    let dual_feas = z.iter().fold(0.0f64, |a, &v| a.max(-v));
    let comp = slack.iter().zip(z.iter()).fold(0.0f64, |a, (s, z)| a.max((s.max(0.0) * z).abs()));
    let kkt = res.dual.amax().max(primal).max(dual_feas).max(comp);
    // f64::max drops NaN, so check the inputs directly
    if !x.iter().chain(y.iter()).chain(z.iter()).all(|v| v.is_finite()) {
        return (f64::INFINITY, f64::INFINITY);
    }
    (kkt, primal)
}

struct Newton {
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    n: usize,
}

fn factor(p: &QpProblem, rows: &[Row], w: &DVector<f64>, reg: f64) -> Option<Newton> {
    let n = p.num_vars();
    let me = p.eq_matrix.nrows();
    let mut k = DMatrix::zeros(n + me, n + me);
    k.view_mut((0, 0), (n, n)).copy_from(&p.q);
    for (r, row) in rows.iter().enumerate() {
        let wr = w[r];
        for (a, &ja) in row.idx.iter().enumerate() {
            for (b, &jb) in row.idx.iter().enumerate() {
                k[(ja, jb)] += wr * row.val[a] * row.val[b];
            }
        }
    }
    for j in 0..n {
        k[(j, j)] += reg;
    }
    for i in 0..me {
        for j in 0..n {
            let a = p.eq_matrix[(i, j)];
            k[(n + i, j)] = a;
            k[(j, n + i)] = a;
        }
        k[(n + i, n + i)] = -reg;
    }
    let lu = k.lu();
    if !lu.is_invertible() {
        return None;
    }
    Some(Newton { lu, n })
}

impl Newton {
    /// Solves `[H A^T; A 0] [dx; -dy] = [r1; r2]`.
    fn solve(&self, r1: &DVector<f64>, r2: &DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
        let me = r2.len();
        let mut rhs = DVector::zeros(self.n + me);
        rhs.rows_mut(0, self.n).copy_from(r1);
        rhs.rows_mut(self.n, me).copy_from(r2);
        let sol = self.lu.solve(&rhs)?;
        let dx = sol.rows(0, self.n).into_owned();
        let dy = -sol.rows(self.n, me).into_owned();
        Some((dx, dy))
    }
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    let mut a: f64 = 1.0;
    for (x, d) in v.iter().zip(dv.iter()) {
        if *d < 0.0 {
            a = a.min(-x / d);
        }
    }
    a
}

struct Iterate {
    x: DVector<f64>,
    y: DVector<f64>,
    z: DVector<f64>,
    s: DVector<f64>,
}

fn interior_point(p: &QpProblem, rows: &[Row], opts: &QpOptions) -> (Iterate, bool, usize) {
    let n = p.num_vars();
    let me = p.eq_matrix.nrows();
    let mi = rows.len();
    let mut x = opts.initial.clone().filter(|v| v.len() == n).unwrap_or_else(|| DVector::zeros(n));
    let mut y = DVector::zeros(me);
    let mut s = DVector::from_iterator(mi, rows.iter().map(|row| (row.rhs - row.dot(&x)).max(1.0)));
    let mut z = DVector::from_element(mi, 1.0);
    let eps = (opts.tol * 1e-3).max(1e-13);
    let scale_c = 1.0 + p.c.amax() + p.q.amax();
    let scale_b = 1.0 + p.eq_rhs.amax().max(rows.iter().fold(0.0f64, |a, r| a.max(r.rhs.abs())));
    let mut converged = false;
    let mut it = 0;
    while it < opts.max_iterations {
        let res = residuals(p, rows, &x, &y, &z, &s);
        let mu = if mi > 0 { s.dot(&z) / mi as f64 } else { 0.0 };
        if res.dual.amax() <= eps * scale_c && res.eq.amax() <= eps * scale_b && res.ineq.amax() <= eps * scale_b && mu <= eps {
            converged = true;
            break;
        }
        it += 1;
        let w = z.component_div(&s);
        let reg = 1e-11;
        let Some(newton) = factor(p, rows, &w, reg) else { break };

        let direction = |rc: &DVector<f64>| -> Option<(DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>)> {
            // t = S^{-1} (-rc + Z rg)
            let t = DVector::from_iterator(mi, (0..mi).map(|r| (-rc[r] + z[r] * res.ineq[r]) / s[r]));
            let mut r1 = -&res.dual;
            for (r, row) in rows.iter().enumerate() {
                for (&j, &v) in row.idx.iter().zip(&row.val) {
                    r1[j] -= v * t[r];
                }
            }
            let r2 = -&res.eq;
            let (dx, dy) = newton.solve(&r1, &r2)?;
            let gdx = DVector::from_iterator(mi, rows.iter().map(|row| row.dot(&dx)));
            let dz = DVector::from_iterator(mi, (0..mi).map(|r| t[r] + w[r] * gdx[r]));
            let ds = DVector::from_iterator(mi, (0..mi).map(|r| -res.ineq[r] - gdx[r]));
            Some((dx, dy, dz, ds))
        };

        let rc_aff = s.component_mul(&z);
        let Some((_, _, dz_a, ds_a)) = direction(&rc_aff) else { break };
        let a_aff = max_step(&s, &ds_a).min(max_step(&z, &dz_a));
        let mu_aff = if mi > 0 {
            (&s + &ds_a * a_aff).dot(&(&z + &dz_a * a_aff)) / mi as f64
        } else {
            0.0
        };
        let sigma = if mu > 0.0 { (mu_aff / mu).powi(3).clamp(0.0, 1.0) } else { 0.0 };
        let rc = DVector::from_iterator(mi, (0..mi).map(|r| s[r] * z[r] + ds_a[r] * dz_a[r] - sigma * mu));
        let Some((dx, dy, dz, ds)) = direction(&rc) else { break };
        let alpha = (0.995 * max_step(&s, &ds).min(max_step(&z, &dz))).min(1.0);
        let (xn, yn, zn, sn) = (&x + &dx * alpha, &y + &dy * alpha, &z + &dz * alpha, &s + &ds * alpha);
        // a dual residual stuck at roundoff keeps driving s and z down until
        // z / s is 0 / 0; stop at the last finite iterate and let polish finish
        if ![&xn, &yn, &zn, &sn].iter().all(|v| v.iter().all(|e| e.is_finite())) || mi > 0 && sn.min() <= 0.0 {
            break;
        }
        (x, y, z, s) = (xn, yn, zn, sn);
        if x.amax() > 1e14 {
            break;
        }
    }
    (Iterate { x, y, z, s }, converged, it)
}

/// Re-solves the equality-constrained QP on the active set of `it`.
/// Returns `(x, y, z)` when the polished point passes every KKT check.
fn polish(p: &QpProblem, rows: &[Row], it: &Iterate, tol: f64) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let n = p.num_vars();
    let me = p.eq_matrix.nrows();
    let active: Vec<usize> = (0..rows.len()).filter(|&r| it.s[r] < it.z[r]).collect();
    // Bound rows fix their variable; everything else enters the KKT system.
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    let mut general = Vec::new();
    for &r in &active {
        match rows[r].bound {
            Some((j, _)) if fixed[j].is_none() => fixed[j] = Some(rows[r].rhs * rows[r].val[0]),
            Some(_) => return None,
            None => general.push(r),
        }
    }
    let free: Vec<usize> = (0..n).filter(|&j| fixed[j].is_none()).collect();
    let nf = free.len();
    let ng = general.len();
    let dim = nf + me + ng;
    let mut xfix = DVector::zeros(n);
    for j in 0..n {
        if let Some(v) = fixed[j] {
            xfix[j] = v;
        }
    }
    let mut k = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    let qx = &p.q * &xfix;
    for (a, &ja) in free.iter().enumerate() {
        for (b, &jb) in free.iter().enumerate() {
            k[(a, b)] = p.q[(ja, jb)];
        }
        rhs[a] = -p.c[ja] - qx[ja];
    }
    for i in 0..me {
        let mut b = p.eq_rhs[i];
        for j in 0..n {
            if fixed[j].is_some() {
                b -= p.eq_matrix[(i, j)] * xfix[j];
            }
        }
        for (a, &ja) in free.iter().enumerate() {
            let v = p.eq_matrix[(i, ja)];
            k[(nf + i, a)] = v;
            k[(a, nf + i)] = v;
        }
        rhs[nf + i] = b;
    }
    let pos: Vec<Option<usize>> = {
        let mut pos = vec![None; n];
        for (a, &j) in free.iter().enumerate() {
            pos[j] = Some(a);
        }
        pos
    };
    for (g, &r) in general.iter().enumerate() {
        let row = &rows[r];
        let mut b = row.rhs;
        for (&j, &v) in row.idx.iter().zip(&row.val) {
            match pos[j] {
                Some(a) => {
                    k[(nf + me + g, a)] = v;
                    k[(a, nf + me + g)] = v;
                }
                None => b -= v * xfix[j],
            }
        }
        rhs[nf + me + g] = b;
    }
    let sol = if rhs.is_empty() { rhs } else { k.lu().solve(&rhs)? };
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let mut x = xfix;
    for (a, &j) in free.iter().enumerate() {
        x[j] = sol[a];
    }
    let y = -sol.rows(nf, me).into_owned();
    let mut z = DVector::zeros(rows.len());
    for (g, &r) in general.iter().enumerate() {
        z[r] = sol[nf + me + g];
    }
    // multipliers of the fixing bound rows from the stationarity residual
    let mut stat = &p.q * &x + &p.c - p.eq_matrix.transpose() * &y;
    for &r in &general {
        for (&j, &v) in rows[r].idx.iter().zip(&rows[r].val) {
            stat[j] += v * z[r];
        }
    }
    for &r in &active {
        if let Some((j, _)) = rows[r].bound {
            // row is val * x_j <= rhs with val = +-1: stat_j + val * z = 0
            z[r] = -stat[j] / rows[r].val[0];
        }
    }
    let (res, _) = kkt_residual(p, rows, &x, &y, &z);
    if res <= tol {
        Some((x, y, z))
    } else {
        None
    }
}

/// Solves a convex QP with default options and the given tolerance.
pub fn solve_qp(p: &QpProblem, tol: f64) -> Result<Solution> {
    solve_qp_with(p, &QpOptions { tol, ..QpOptions::default() })
}

pub fn solve_qp_with(p: &QpProblem, opts: &QpOptions) -> Result<Solution> {
    p.validate()?;
    let n = p.num_vars();
    let rows = collect_rows(p);
    let (it, converged, iterations) = interior_point(p, &rows, opts);

    let (x, y, z) = match polish(p, &rows, &it, opts.tol) {
        Some(v) => v,
        None => (it.x.clone(), it.y.clone(), it.z.clone()),
    };
    let (kkt, primal) = kkt_residual(p, &rows, &x, &y, &z);
    let status = if kkt <= opts.tol {
        Status::Optimal
    } else if converged {
        Status::NumericalFailure
    } else if x.amax() > 1e14 {
        Status::Unbounded
    } else if primal > opts.tol.sqrt() && it.z.amax() > 1e8 {
        Status::Infeasible
    } else {
        Status::IterationLimit
    };

    let mi_general = p.ineq_matrix.nrows();
    let mut duals: Vec<f64> = y.iter().copied().collect();
    duals.extend(z.iter().take(mi_general).copied());
    let mut bound_mult = vec![0.0; n];
    for (r, row) in rows.iter().enumerate() {
        if let Some((j, upper)) = row.bound {
            bound_mult[j] += if upper { z[r] } else { -z[r] };
        }
    }
    Ok(Solution {
        status,
        objective: p.objective_value(&x),
        x: x.iter().copied().collect(),
        duals,
        reduced_costs: bound_mult,
        dual_objective: f64::NAN,
        best_bound: f64::NAN,
        gap: 0.0,
        max_violation: primal,
        kkt_residual: kkt,
        iterations,
        nodes: 0,
    })
}
