//! Optimization kernel shared by every trainer: a dense bounded simplex for
//! LPs, an interior-point method with active-set polishing for convex QPs,
//! and best-bound branch-and-bound for MILPs with binary variables.
//!
//! Problem sizes in this crate stay around a thousand rows, so everything is
//! dense.

mod lp;
mod milp;
mod qp;

use serde::{Deserialize, Serialize};

pub use lp::{solve_lp, LpProblem, RowSense};
pub use milp::{solve_milp, MilpOptions, MilpProblem};
pub use qp::{solve_qp, solve_qp_with, QpOptions, QpProblem};

/// Default feasibility/optimality tolerance.
pub const DEFAULT_TOL: f64 = 1e-7;

/// Solver outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    /// Wall-clock limit hit; an incumbent may still be present.
    TimeLimit,
    /// MILP stopped with `gap <= rel_gap` while open nodes remained.
    GapReached,
    /// MILP node budget exhausted; an incumbent may still be present.
    NodeLimit,
    IterationLimit,
    /// Converged iterate failed the final feasibility audit.
    NumericalFailure,
}

impl Status {
    /// True when `x` holds a feasible point worth using.
    pub fn has_solution(self) -> bool {
        !matches!(
            self,
            Status::Infeasible | Status::Unbounded | Status::IterationLimit | Status::NumericalFailure
        )
    }
}

/// Result of any solve. Fields that do not apply to a problem class are left
/// at their neutral values (empty vectors, zero gap).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub status: Status,
    pub x: Vec<f64>,
    pub objective: f64,
    /// LP: shadow prices `d obj / d b_i`. QP: equality multipliers followed by
    /// the multipliers of the general inequality rows.
    pub duals: Vec<f64>,
    /// LP: reduced costs. QP: net bound multipliers (upper minus lower).
    pub reduced_costs: Vec<f64>,
    /// LP only: value of the dual function at the returned duals.
    pub dual_objective: f64,
    /// MILP: best proven lower bound.
    pub best_bound: f64,
    /// MILP: `(incumbent - bound) / max(1, |incumbent|)`.
    pub gap: f64,
    pub max_violation: f64,
    /// QP only: largest KKT residual (stationarity, feasibility, complementarity).
    pub kkt_residual: f64,
    pub iterations: usize,
    pub nodes: usize,
}

impl Solution {
    pub(crate) fn failed(status: Status, n: usize, iterations: usize) -> Self {
        Solution {
            status,
            x: vec![f64::NAN; n],
            objective: f64::NAN,
            duals: Vec::new(),
            reduced_costs: Vec::new(),
            dual_objective: f64::NAN,
            best_bound: f64::NEG_INFINITY,
            gap: f64::INFINITY,
            max_violation: f64::INFINITY,
            kkt_residual: f64::INFINITY,
            iterations,
            nodes: 0,
        }
    }
}
