//! Dense bounded-variable primal simplex.
//!
//! Rows are stored as `a_i^T x - s_i = 0` with the row sense moved into the
//! bounds of the logical variable `s_i`, so every column (structural or
//! logical) is handled by the same bounded ratio test. Phase 1 minimises the
//! sum of artificials added only for rows the initial point violates.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Solution, Status};
use crate::error::{invalid, Result};

/// Row sense of a linear constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

/// `min c^T x  s.t.  A x (<=|=|>=) b,  lower <= x <= upper`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpProblem {
    pub objective: DVector<f64>,
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub senses: Vec<RowSense>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl LpProblem {
    /// A problem with `objective.len()` variables, no rows, and bounds `[0, +inf)`.
    pub fn new(objective: DVector<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            matrix: DMatrix::zeros(0, n),
            rhs: DVector::zeros(0),
            senses: Vec::new(),
            lower: DVector::zeros(n),
            upper: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.matrix.nrows()
    }

    /// Builds the constraint block in one go from dense rows.
    pub fn with_rows(mut self, rows: Vec<(Vec<f64>, RowSense, f64)>) -> Self {
        let n = self.num_vars();
        let m0 = self.num_rows();
        let m = m0 + rows.len();
        let mut matrix = DMatrix::zeros(m, n);
        matrix.rows_mut(0, m0).copy_from(&self.matrix);
        let mut rhs = DVector::zeros(m);
        rhs.rows_mut(0, m0).copy_from(&self.rhs);
        for (k, (coeffs, sense, b)) in rows.into_iter().enumerate() {
            for (j, v) in coeffs.into_iter().enumerate().take(n) {
                matrix[(m0 + k, j)] = v;
            }
            rhs[m0 + k] = b;
            self.senses.push(sense);
        }
        self.matrix = matrix;
        self.rhs = rhs;
        self
    }

    /// Appends rows given as sparse `(column, coefficient)` pairs; repeated
    /// columns within a row are summed.
    pub fn with_sparse_rows(mut self, rows: Vec<(Vec<(usize, f64)>, RowSense, f64)>) -> Self {
        let n = self.num_vars();
        let m0 = self.num_rows();
        let m = m0 + rows.len();
        let mut matrix = DMatrix::zeros(m, n);
        matrix.rows_mut(0, m0).copy_from(&self.matrix);
        let mut rhs = DVector::zeros(m);
        rhs.rows_mut(0, m0).copy_from(&self.rhs);
        for (k, (coeffs, sense, b)) in rows.into_iter().enumerate() {
            for (j, v) in coeffs {
                matrix[(m0 + k, j)] += v;
            }
            rhs[m0 + k] = b;
            self.senses.push(sense);
        }
        self.matrix = matrix;
        self.rhs = rhs;
        self
    }

    /// Appends a single row given as sparse `(column, coefficient)` pairs.
    pub fn add_row(&mut self, coeffs: &[(usize, f64)], sense: RowSense, rhs: f64) {
        let n = self.num_vars();
        let m = self.num_rows();
        let mut matrix = DMatrix::zeros(m + 1, n);
        matrix.rows_mut(0, m).copy_from(&self.matrix);
        for &(j, v) in coeffs {
            matrix[(m, j)] += v;
        }
        self.matrix = matrix;
        self.rhs = self.rhs.clone().insert_row(m, rhs);
        self.senses.push(sense);
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lower[j] = lower;
        self.upper[j] = upper;
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.num_vars();
        let m = self.num_rows();
        if self.matrix.ncols() != n || self.lower.len() != n || self.upper.len() != n {
            return invalid("LP column dimensions are inconsistent");
        }
        if self.rhs.len() != m || self.senses.len() != m {
            return invalid("LP row dimensions are inconsistent");
        }
        if self.objective.iter().chain(self.matrix.iter()).chain(self.rhs.iter()).any(|v| !v.is_finite()) {
            return invalid("LP coefficients must be finite");
        }
        for j in 0..n {
            if self.lower[j].is_nan() || self.upper[j].is_nan() || self.lower[j] > self.upper[j] {
                return invalid(format!("variable {j} has empty bounds"));
            }
            if self.lower[j] == f64::INFINITY || self.upper[j] == f64::NEG_INFINITY {
                return invalid(format!("variable {j} has an infinite bound on the wrong side"));
            }
        }
        Ok(())
    }

    /// Maximum violation of rows and bounds at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.num_rows() {
            let ax: f64 = (0..self.num_vars()).map(|j| self.matrix[(i, j)] * x[j]).sum();
            let v = match self.senses[i] {
                RowSense::Le => ax - self.rhs[i],
                RowSense::Ge => self.rhs[i] - ax,
                RowSense::Eq => (ax - self.rhs[i]).abs(),
            };
            worst = worst.max(v);
        }
        for (j, &xj) in x.iter().enumerate() {
            worst = worst.max(self.lower[j] - xj).max(xj - self.upper[j]);
        }
        worst
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// LP-format-like textual dump for cross-checking with external solvers.
    pub fn to_lp_format(&self, binaries: &[usize]) -> String {
        let mut out = String::from("Minimize\n obj:");
        for (j, &c) in self.objective.iter().enumerate() {
            if c != 0.0 {
                let _ = write!(out, " {:+} x{}", c, j);
            }
        }
        out.push_str("\nSubject To\n");
        for i in 0..self.num_rows() {
            let _ = write!(out, " r{}:", i);
            for j in 0..self.num_vars() {
                let a = self.matrix[(i, j)];
                if a != 0.0 {
                    let _ = write!(out, " {:+} x{}", a, j);
                }
            }
            let op = match self.senses[i] {
                RowSense::Le => "<=",
                RowSense::Eq => "=",
                RowSense::Ge => ">=",
            };
            let _ = writeln!(out, " {} {}", op, self.rhs[i]);
        }
        out.push_str("Bounds\n");
        for j in 0..self.num_vars() {
            let (l, u) = (self.lower[j], self.upper[j]);
            match (l.is_finite(), u.is_finite()) {
                (false, false) => {
                    let _ = writeln!(out, " x{} free", j);
                }
                (true, false) => {
                    let _ = writeln!(out, " x{} >= {}", j, l);
                }
                (false, true) => {
                    let _ = writeln!(out, " -inf <= x{} <= {}", j, u);
                }
                (true, true) => {
                    let _ = writeln!(out, " {} <= x{} <= {}", l, j, u);
                }
            }
        }
        if !binaries.is_empty() {
            out.push_str("Binaries\n");
            for &j in binaries {
                let _ = writeln!(out, " x{}", j);
            }
        }
        out.push_str("End\n");
        out
    }
}

const PIVOT_TOL: f64 = 1e-9;
const PRIMAL_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const DEGENERATE_SWITCH: usize = 50;

/// Which variable occupies a basis row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Basic {
    Column(usize),
    Artificial,
}

struct Simplex {
    m: usize,
    /// structural + logical columns
    ncols: usize,
    /// row-major `m x ncols`, equal to `B^{-1} [A | -I]`
    tab: Vec<f64>,
    basis: Vec<Basic>,
    /// row of each basic column, `usize::MAX` if nonbasic
    row_of: Vec<usize>,
    /// values of all columns (nonbasic at a bound or zero when free)
    x: Vec<f64>,
    /// values of the basic variables, indexed by row
    xb: Vec<f64>,
    lo: Vec<f64>,
    up: Vec<f64>,
    cost: Vec<f64>,
    d: Vec<f64>,
    iterations: usize,
    max_iterations: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

impl Simplex {
    fn new(p: &LpProblem) -> Self {
        let n = p.num_vars();
        let m = p.num_rows();
        let ncols = n + m;
        let mut lo = Vec::with_capacity(ncols);
        let mut up = Vec::with_capacity(ncols);
        lo.extend(p.lower.iter().copied());
        up.extend(p.upper.iter().copied());
        for i in 0..m {
            let b = p.rhs[i];
            let (l, u) = match p.senses[i] {
                RowSense::Le => (f64::NEG_INFINITY, b),
                RowSense::Ge => (b, f64::INFINITY),
                RowSense::Eq => (b, b),
            };
            lo.push(l);
            up.push(u);
        }
        let mut x = vec![0.0; ncols];
        for j in 0..n {
            x[j] = if lo[j].is_finite() {
                lo[j]
            } else if up[j].is_finite() {
                up[j]
            } else {
                0.0
            };
        }
        let mut tab = vec![0.0; m * ncols];
        let mut basis = Vec::with_capacity(m);
        let mut row_of = vec![usize::MAX; ncols];
        let mut xb = vec![0.0; m];
        for i in 0..m {
            let ax: f64 = (0..n).map(|j| p.matrix[(i, j)] * x[j]).sum();
            let s = n + i;
            let row = &mut tab[i * ncols..(i + 1) * ncols];
            if ax >= lo[s] - PRIMAL_TOL && ax <= up[s] + PRIMAL_TOL {
                // logical basic: row = -[a_i | -e_i]
                for j in 0..n {
                    row[j] = -p.matrix[(i, j)];
                }
                row[s] = 1.0;
                basis.push(Basic::Column(s));
                row_of[s] = i;
                xb[i] = ax;
                x[s] = ax;
            } else {
                // logical parked at the violated bound, artificial absorbs the rest
                let sv = if ax < lo[s] { lo[s] } else { up[s] };
                x[s] = sv;
                let resid = ax - sv;
                let g = -resid.signum();
                for j in 0..n {
                    row[j] = g * p.matrix[(i, j)];
                }
                row[s] = -g;
                basis.push(Basic::Artificial);
                xb[i] = resid.abs();
            }
        }
        let mut cost = vec![0.0; ncols];
        cost[..n].copy_from_slice(p.objective.as_slice());
        Simplex {
            m,
            ncols,
            tab,
            basis,
            row_of,
            x,
            xb,
            lo,
            up,
            cost,
            d: vec![0.0; ncols],
            iterations: 0,
            max_iterations: 100 * (m + ncols) + 1000,
        }
    }

    fn has_artificials(&self) -> bool {
        self.basis.iter().any(|b| *b == Basic::Artificial)
    }

    fn basic_bounds(&self, i: usize, phase1: bool) -> (f64, f64) {
        match self.basis[i] {
            Basic::Column(j) => (self.lo[j], self.up[j]),
            Basic::Artificial => (0.0, if phase1 { f64::INFINITY } else { 0.0 }),
        }
    }

    /// Reduced costs from scratch: `d_j = c_j - c_B^T T_j`.
    fn price(&mut self, phase1: bool) {
        let nc = self.ncols;
        let mut d = if phase1 { vec![0.0; nc] } else { self.cost.clone() };
        for i in 0..self.m {
            let cb = match self.basis[i] {
                Basic::Artificial => {
                    if phase1 {
                        1.0
                    } else {
                        0.0
                    }
                }
                Basic::Column(j) => {
                    if phase1 {
                        0.0
                    } else {
                        self.cost[j]
                    }
                }
            };
            if cb != 0.0 {
                let row = &self.tab[i * nc..(i + 1) * nc];
                for (dj, t) in d.iter_mut().zip(row) {
                    *dj -= cb * t;
                }
            }
        }
        for i in 0..self.m {
            if let Basic::Column(j) = self.basis[i] {
                d[j] = 0.0;
            }
        }
        self.d = d;
    }

    /// Recomputes basic values from the nonbasic ones: `x_B = -sum_N T_j x_j`.
    fn refresh_values(&mut self) {
        let nc = self.ncols;
        for i in 0..self.m {
            let row = &self.tab[i * nc..(i + 1) * nc];
            let mut v = 0.0;
            for j in 0..nc {
                if self.row_of[j] == usize::MAX && self.x[j] != 0.0 {
                    v -= row[j] * self.x[j];
                }
            }
            self.xb[i] = v;
            if let Basic::Column(j) = self.basis[i] {
                self.x[j] = v;
            }
        }
    }

    fn choose_entering(&self, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.ncols {
            if self.row_of[j] != usize::MAX || self.lo[j] == self.up[j] {
                continue;
            }
            let dj = self.d[j];
            let at_lower = self.lo[j].is_finite() && self.x[j] <= self.lo[j];
            let at_upper = self.up[j].is_finite() && self.x[j] >= self.up[j];
            let dir = if dj < -DUAL_TOL && !at_upper {
                1.0
            } else if dj > DUAL_TOL && !at_lower {
                -1.0
            } else {
                continue;
            };
            if bland {
                return Some((j, dir));
            }
            if dj.abs() > best_score {
                best_score = dj.abs();
                best = Some((j, dir));
            }
        }
        best
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let nc = self.ncols;
        let piv = self.tab[r * nc + q];
        {
            let row = &mut self.tab[r * nc..(r + 1) * nc];
            let inv = 1.0 / piv;
            for v in row.iter_mut() {
                *v *= inv;
            }
            row[q] = 1.0;
        }
        let (before, rest) = self.tab.split_at_mut(r * nc);
        let (prow, after) = rest.split_at_mut(nc);
        let eliminate = |row: &mut [f64]| {
            let f = row[q];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * p;
                }
                row[q] = 0.0;
            }
        };
        for row in before.chunks_mut(nc) {
            eliminate(row);
        }
        for row in after.chunks_mut(nc) {
            eliminate(row);
        }
        let f = self.d[q];
        if f != 0.0 {
            for (v, p) in self.d.iter_mut().zip(prow.iter()) {
                *v -= f * p;
            }
            self.d[q] = 0.0;
        }
    }

    fn run(&mut self, phase1: bool, deadline: Option<std::time::Instant>) -> Outcome {
        let nc = self.ncols;
        let mut degenerate = 0usize;
        loop {
            if self.iterations >= self.max_iterations {
                return Outcome::IterationLimit;
            }
            if let Some(t) = deadline {
                if self.iterations % 64 == 0 && std::time::Instant::now() > t {
                    return Outcome::IterationLimit;
                }
            }
            let bland = degenerate > DEGENERATE_SWITCH;
            let Some((q, dir)) = self.choose_entering(bland) else {
                return Outcome::Optimal;
            };
            self.iterations += 1;

            // Harris two-pass ratio test.
            let mut relaxed = f64::INFINITY;
            for i in 0..self.m {
                let a = self.tab[i * nc + q] * dir;
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let (l, u) = self.basic_bounds(i, phase1);
                let lim = if a > 0.0 {
                    if l.is_finite() {
                        (self.xb[i] - l + PRIMAL_TOL) / a
                    } else {
                        continue;
                    }
                } else if u.is_finite() {
                    (u - self.xb[i] + PRIMAL_TOL) / -a
                } else {
                    continue;
                };
                relaxed = relaxed.min(lim);
            }
            let mut leave: Option<(usize, f64)> = None;
            let mut best_alpha = 0.0;
            if relaxed.is_finite() {
                for i in 0..self.m {
                    let a = self.tab[i * nc + q] * dir;
                    if a.abs() <= PIVOT_TOL {
                        continue;
                    }
                    let (l, u) = self.basic_bounds(i, phase1);
                    let lim = if a > 0.0 {
                        if !l.is_finite() {
                            continue;
                        }
                        (self.xb[i] - l) / a
                    } else {
                        if !u.is_finite() {
                            continue;
                        }
                        (u - self.xb[i]) / -a
                    };
                    if lim <= relaxed && a.abs() > best_alpha {
                        best_alpha = a.abs();
                        leave = Some((i, lim.max(0.0)));
                    }
                }
            }
            let flip = self.up[q] - self.lo[q];
            let step;
            match leave {
                Some((_, t)) if t < flip => step = t,
                _ if flip.is_finite() => {
                    // bound flip, basis unchanged
                    let delta = dir * flip;
                    for i in 0..self.m {
                        self.xb[i] -= self.tab[i * nc + q] * delta;
                        if let Basic::Column(j) = self.basis[i] {
                            self.x[j] = self.xb[i];
                        }
                    }
                    self.x[q] = if dir > 0.0 { self.up[q] } else { self.lo[q] };
                    degenerate = 0;
                    continue;
                }
                _ => return Outcome::Unbounded,
            }
            let (r, _) = leave.expect("leaving row chosen");
            if step <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            let delta = dir * step;
            for i in 0..self.m {
                let t = self.tab[i * nc + q];
                if t != 0.0 {
                    self.xb[i] -= t * delta;
                }
            }
            // leaving variable lands exactly on the bound it hit
            let a = self.tab[r * nc + q] * dir;
            let (l, u) = self.basic_bounds(r, phase1);
            let landed = if a > 0.0 { l } else { u };
            match self.basis[r] {
                Basic::Column(j) => {
                    self.x[j] = landed;
                    self.row_of[j] = usize::MAX;
                }
                Basic::Artificial => {}
            }
            let entering_value = self.x[q] + delta;
            self.pivot(r, q);
            self.basis[r] = Basic::Column(q);
            self.row_of[q] = r;
            self.x[q] = entering_value;
            self.xb[r] = entering_value;
            for i in 0..self.m {
                if let Basic::Column(j) = self.basis[i] {
                    self.x[j] = self.xb[i];
                }
            }
        }
    }

    fn phase1_infeasibility(&self) -> f64 {
        (0..self.m)
            .filter(|&i| self.basis[i] == Basic::Artificial)
            .map(|i| self.xb[i].abs())
            .sum()
    }
}

/// Simplex result plus the internals the MILP layer needs.
pub(crate) fn solve_lp_inner(p: &LpProblem, tol: f64, deadline: Option<std::time::Instant>) -> Solution {
    let n = p.num_vars();
    let m = p.num_rows();
    let mut sx = Simplex::new(p);
    let scale = 1.0 + p.rhs.amax();

    if sx.has_artificials() {
        sx.price(true);
        match sx.run(true, deadline) {
            Outcome::Optimal => {}
            Outcome::Unbounded | Outcome::IterationLimit => {
                return Solution::failed(Status::IterationLimit, n, sx.iterations);
            }
        }
        sx.refresh_values();
        if sx.phase1_infeasibility() > tol.max(PRIMAL_TOL) * scale {
            return Solution::failed(Status::Infeasible, n, sx.iterations);
        }
        for i in 0..m {
            if sx.basis[i] == Basic::Artificial {
                sx.xb[i] = 0.0;
            }
        }
    }
    sx.price(false);
    let outcome = sx.run(false, deadline);
    sx.refresh_values();
    let status = match outcome {
        Outcome::Optimal => Status::Optimal,
        Outcome::Unbounded => Status::Unbounded,
        Outcome::IterationLimit => Status::IterationLimit,
    };
    // final reduced costs from a fresh pricing pass
    sx.price(false);
    let x: Vec<f64> = sx.x[..n].to_vec();
    let objective = p.objective_value(&x);
    let duals: Vec<f64> = (0..m).map(|i| sx.d[n + i]).collect();
    let reduced: Vec<f64> = sx.d[..n].to_vec();
    let mut dual_objective = 0.0;
    for k in 0..n + m {
        let dk = sx.d[k];
        if dk.abs() <= 1e-12 {
            continue;
        }
        let bound = if dk > 0.0 { sx.lo[k] } else { sx.up[k] };
        dual_objective += dk * bound;
    }
    let max_violation = p.max_violation(&x);
    let status = if status == Status::Optimal && max_violation > tol.max(PRIMAL_TOL) * scale {
        log::warn!("simplex finished with violation {max_violation:e}");
        Status::NumericalFailure
    } else {
        status
    };
    Solution {
        status,
        x,
        objective,
        duals,
        reduced_costs: reduced,
        dual_objective,
        best_bound: objective,
        gap: 0.0,
        max_violation,
        kkt_residual: 0.0,
        iterations: sx.iterations,
        nodes: 0,
    }
}

/// Solves an LP to optimality; outcomes are reported through [`Solution::status`].
///
/// On [`Status::Optimal`], `duals[i]` is the shadow price `d obj / d b_i` and
/// `dual_objective` equals the primal objective up to round-off.
pub fn solve_lp(p: &LpProblem, tol: f64) -> Result<Solution> {
    p.validate()?;
    Ok(solve_lp_inner(p, tol, None))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(c: &[f64]) -> LpProblem {
        LpProblem::new(DVector::from_column_slice(c))
    }

    #[test]
    fn single_lower_bound() {
        let mut p = lp(&[1.0]);
        p.set_bounds(0, f64::NEG_INFINITY, f64::INFINITY);
        p.add_row(&[(0, 1.0)], RowSense::Ge, 3.0);
        let s = solve_lp(&p, 1e-9).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.x[0] - 3.0).abs() < 1e-12);
        assert!((s.objective - 3.0).abs() < 1e-12);
        assert!((s.duals[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unbounded_ray() {
        let p = lp(&[-1.0]);
        let s = solve_lp(&p, 1e-9).unwrap();
        assert_eq!(s.status, Status::Unbounded);
    }

    #[test]
    fn infeasible_rows() {
        let mut p = lp(&[1.0, 1.0]);
        p.add_row(&[(0, 1.0), (1, 1.0)], RowSense::Le, 1.0);
        p.add_row(&[(0, 1.0), (1, 1.0)], RowSense::Ge, 2.0);
        assert_eq!(solve_lp(&p, 1e-9).unwrap().status, Status::Infeasible);
    }

    #[test]
    fn equality_with_free_variables() {
        // min |x - 2| + |y + 1| written with split variables, plus x + y = 0
        let mut p = lp(&[0.0, 0.0, 1.0, 1.0]);
        p.set_bounds(0, f64::NEG_INFINITY, f64::INFINITY);
        p.set_bounds(1, f64::NEG_INFINITY, f64::INFINITY);
        p.add_row(&[(2, 1.0), (0, -1.0)], RowSense::Ge, -2.0);
        p.add_row(&[(2, 1.0), (0, 1.0)], RowSense::Ge, 2.0);
        p.add_row(&[(3, 1.0), (1, -1.0)], RowSense::Ge, 1.0);
        p.add_row(&[(3, 1.0), (1, 1.0)], RowSense::Ge, -1.0);
        p.add_row(&[(0, 1.0), (1, 1.0)], RowSense::Eq, 0.0);
        let s = solve_lp(&p, 1e-9).unwrap();
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective - 1.0).abs() < 1e-9, "{}", s.objective);
        assert!((s.dual_objective - s.objective).abs() < 1e-9);
    }

    #[test]
    fn lp_dump_lists_binaries() {
        let mut p = lp(&[1.0, -2.0]);
        p.add_row(&[(0, 1.0), (1, 1.0)], RowSense::Le, 4.0);
        let text = p.to_lp_format(&[1]);
        assert!(text.contains("r0: +1 x0 +1 x1 <= 4"));
        assert!(text.contains("Binaries\n x1"));
    }
}
