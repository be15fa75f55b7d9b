//! Best-bound branch-and-bound over LP relaxations for problems whose integer
//! variables are all binary.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::lp::{solve_lp_inner, LpProblem};
use super::{Solution, Status, DEFAULT_TOL};
use crate::error::{invalid, Result};

const INTEGRALITY_TOL: f64 = 1e-6;

/// An LP plus a set of variables restricted to `{0, 1}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MilpProblem {
    pub lp: LpProblem,
    pub binaries: Vec<usize>,
}

impl MilpProblem {
    pub fn new(lp: LpProblem, binaries: Vec<usize>) -> Self {
        Self { lp, binaries }
    }

    pub fn validate(&self) -> Result<()> {
        self.lp.validate()?;
        let n = self.lp.num_vars();
        let mut seen = vec![false; n];
        for &j in &self.binaries {
            if j >= n {
                return invalid(format!("binary index {j} out of range ({n} variables)"));
            }
            if seen[j] {
                return invalid(format!("binary index {j} listed twice"));
            }
            seen[j] = true;
        }
        Ok(())
    }

    pub fn to_lp_format(&self) -> String {
        self.lp.to_lp_format(&self.binaries)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpOptions {
    pub rel_gap: f64,
    /// Wall-clock budget in seconds.
    pub time_limit: f64,
    /// Maximum number of branch-and-bound nodes to process; `None` for no cap.
    /// Unlike the time limit, this budget is deterministic.
    pub node_limit: Option<usize>,
    /// Values for `binaries`, in the same order, used to seed the incumbent.
    pub warm_start: Option<Vec<f64>>,
    pub tol: f64,
}

impl Default for MilpOptions {
    fn default() -> Self {
        Self {
            rel_gap: 1e-6,
            time_limit: 300.0,
            node_limit: None,
            warm_start: None,
            tol: DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    bound: f64,
    id: usize,
    /// `(binary position, value)` fixings accumulated along the branch
    fixings: Vec<(usize, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap is a max-heap: invert so the smallest bound (then oldest id) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then_with(|| other.id.cmp(&self.id))
    }
}

struct Search<'a> {
    problem: &'a MilpProblem,
    work: LpProblem,
    opts: &'a MilpOptions,
    deadline: Instant,
    incumbent: Option<(Vec<f64>, f64)>,
    lp_iterations: usize,
}

impl Search<'_> {
    fn solve_with(&mut self, fixings: &[(usize, f64)]) -> Solution {
        for &j in &self.problem.binaries {
            self.work.lower[j] = self.problem.lp.lower[j].max(0.0);
            self.work.upper[j] = self.problem.lp.upper[j].min(1.0);
        }
        for &(k, v) in fixings {
            let j = self.problem.binaries[k];
            self.work.lower[j] = v;
            self.work.upper[j] = v;
        }
        let s = solve_lp_inner(&self.work, self.opts.tol, Some(self.deadline));
        self.lp_iterations += s.iterations;
        s
    }

    fn offer(&mut self, x: &[f64]) {
        let mut x = x.to_vec();
        for &j in &self.problem.binaries {
            x[j] = x[j].round();
        }
        let obj = self.problem.lp.objective_value(&x);
        if self.incumbent.as_ref().is_none_or(|(_, best)| obj < *best) {
            self.incumbent = Some((x, obj));
        }
    }

    fn incumbent_value(&self) -> f64 {
        self.incumbent.as_ref().map_or(f64::INFINITY, |(_, v)| *v)
    }

    /// Fix every binary to its rounded LP value and re-solve the continuous part.
    fn round_and_fix(&mut self, x: &[f64]) {
        let fixings: Vec<(usize, f64)> = self
            .problem
            .binaries
            .iter()
            .enumerate()
            .map(|(k, &j)| (k, x[j].round().clamp(0.0, 1.0)))
            .collect();
        let s = self.solve_with(&fixings);
        if s.status == Status::Optimal {
            self.offer(&s.x);
        }
    }

    /// Most fractional binary; ties go to the lowest index.
    fn branching_candidate(&self, x: &[f64]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (k, &j) in self.problem.binaries.iter().enumerate() {
            let frac = (x[j] - x[j].floor()).min(x[j].ceil() - x[j]);
            if frac > INTEGRALITY_TOL && best.is_none_or(|(_, f)| frac > f + 1e-12) {
                best = Some((k, frac));
            }
        }
        best.map(|(k, _)| k)
    }
}

fn relative_gap(incumbent: f64, bound: f64) -> f64 {
    if !incumbent.is_finite() {
        return f64::INFINITY;
    }
    ((incumbent - bound) / incumbent.abs().max(1.0)).max(0.0)
}

/// Branch-and-bound with most-fractional branching and best-bound node order.
///
/// The returned `Solution` carries the incumbent (if any), the best proven
/// bound and the relative gap. Node order and branching are deterministic, so
/// identical inputs give identical results unless the wall-clock limit fires.
pub fn solve_milp(p: &MilpProblem, opts: &MilpOptions) -> Result<Solution> {
    p.validate()?;
    if let Some(ws) = &opts.warm_start {
        if ws.len() != p.binaries.len() {
            return invalid(format!("warm start has {} values for {} binaries", ws.len(), p.binaries.len()));
        }
    }
    let n = p.lp.num_vars();
    let start = Instant::now();
    let mut search = Search {
        problem: p,
        work: p.lp.clone(),
        opts,
        deadline: start + Duration::from_secs_f64(opts.time_limit.max(0.0)),
        incumbent: None,
        lp_iterations: 0,
    };

    if let Some(ws) = &opts.warm_start {
        let fixings: Vec<(usize, f64)> = ws.iter().enumerate().map(|(k, &v)| (k, v.round().clamp(0.0, 1.0))).collect();
        let s = search.solve_with(&fixings);
        if s.status == Status::Optimal {
            search.offer(&s.x);
        } else {
            log::warn!("MILP warm start is infeasible ({:?}); ignoring it", s.status);
        }
    }

    let mut heap = BinaryHeap::new();
    heap.push(Node { bound: f64::NEG_INFINITY, id: 0, fixings: Vec::new() });
    let mut next_id = 1;
    let mut nodes = 0usize;
    let mut limit_status = None;
    let mut root_unbounded = false;

    while let Some(top) = heap.peek() {
        let inc = search.incumbent_value();
        let tiny = 1e-9 * inc.abs().max(1.0);
        if top.bound >= inc - tiny {
            heap.clear();
            break;
        }
        if relative_gap(inc, top.bound) <= opts.rel_gap {
            limit_status = Some(Status::GapReached);
            break;
        }
        if opts.node_limit.is_some_and(|cap| nodes >= cap) {
            limit_status = Some(Status::NodeLimit);
            break;
        }
        if Instant::now() > search.deadline {
            limit_status = Some(Status::TimeLimit);
            break;
        }
        let node = heap.pop().expect("peeked");
        nodes += 1;
        let s = search.solve_with(&node.fixings);
        match s.status {
            Status::Optimal => {}
            Status::Infeasible => continue,
            Status::Unbounded if node.id == 0 => {
                root_unbounded = true;
                break;
            }
            Status::IterationLimit if Instant::now() > search.deadline => {
                heap.push(node);
                limit_status = Some(Status::TimeLimit);
                break;
            }
            other => {
                log::warn!("node LP ended with {other:?}; pruning node {}", node.id);
                continue;
            }
        }
        let bound = s.objective.max(node.bound);
        if bound >= search.incumbent_value() - tiny {
            continue;
        }
        match search.branching_candidate(&s.x) {
            // Binaries within the integrality tolerance can still leak
            // through big-M rows, so near-integral leaves are re-solved
            // with exact 0/1 values before becoming incumbents.
            None if p.binaries.iter().all(|&j| s.x[j] == 0.0 || s.x[j] == 1.0) => search.offer(&s.x),
            None => search.round_and_fix(&s.x),
            Some(k) => {
                if node.id == 0 {
                    search.round_and_fix(&s.x);
                }
                for v in [0.0, 1.0] {
                    let mut fixings = node.fixings.clone();
                    fixings.push((k, v));
                    heap.push(Node { bound, id: next_id, fixings });
                    next_id += 1;
                }
            }
        }
    }

    if root_unbounded {
        let mut sol = Solution::failed(Status::Unbounded, n, search.lp_iterations);
        sol.nodes = nodes;
        return Ok(sol);
    }

    let open_bound = heap.peek().map_or(f64::INFINITY, |node| node.bound);
    let inc = search.incumbent_value();
    let best_bound = open_bound.min(inc);
    let status = match (limit_status, &search.incumbent) {
        (None, None) => Status::Infeasible,
        (None, Some(_)) => Status::Optimal,
        (Some(st), _) => st,
    };
    let mut sol = match search.incumbent.take() {
        Some((x, obj)) => Solution {
            status,
            max_violation: p.lp.max_violation(&x),
            x,
            objective: obj,
            duals: Vec::new(),
            reduced_costs: Vec::new(),
            dual_objective: f64::NAN,
            best_bound,
            gap: relative_gap(obj, best_bound),
            kkt_residual: 0.0,
            iterations: search.lp_iterations,
            nodes,
        },
        None => {
            let mut s = Solution::failed(status, n, search.lp_iterations);
            s.best_bound = best_bound;
            s.x = Vec::new();
            s
        }
    };
    sol.nodes = nodes;
    Ok(sol)
}
