use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_xy, olsr_on_support, sse, train_olsr, LinearModel, Provenance};
use crate::error::{invalid, Error, Result};
use crate::optim::{solve_milp, LpProblem, MilpOptions, MilpProblem, RowSense, DEFAULT_TOL};

/// Largest number of supports the enumerate mode will evaluate.
pub const MAX_ENUMERATED_SUPPORTS: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetMode {
    /// Exhaustive search with an OLSR fit per support.
    Enumerate,
    /// Absolute-error MILP to choose the support, then an OLSR refit.
    Miqp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetConfig {
    pub n_p_tilde: usize,
    /// Coefficient bound; `None` uses 10 times the largest full-OLSR
    /// coefficient magnitude.
    pub a_bar: Option<f64>,
    pub mode: SubsetMode,
    #[serde(default)]
    pub milp: MilpOptions,
}

impl SubsetConfig {
    pub fn new(n_p_tilde: usize) -> Self {
        SubsetConfig { n_p_tilde, a_bar: None, mode: SubsetMode::Enumerate, milp: MilpOptions::default() }
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Advances `c` to the next k-combination of `0..n` in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn default_a_bar(x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    match train_olsr(x, y) {
        Ok(m) if m.a.amax() > 0.0 => 10.0 * m.a.amax(),
        _ => 1e3,
    }
}

fn enumerate(x: &DMatrix<f64>, y: &DVector<f64>, k: usize) -> Result<(Vec<usize>, DVector<f64>, f64)> {
    let np = x.ncols();
    let count = binomial(np, k);
    if count > MAX_ENUMERATED_SUPPORTS {
        return invalid(format!("{count} candidate supports exceed the enumeration limit"));
    }
    let mut comb: Vec<usize> = (0..k).collect();
    let mut best: Option<(f64, Vec<usize>, DVector<f64>, f64)> = None;
    loop {
        // Rank-deficient supports cannot be fitted and are skipped.
        if let Ok((a, a0)) = olsr_on_support(x, y, &comb) {
            let s = sse(&a, a0, x, y);
            if best.as_ref().is_none_or(|b| s < b.0) {
                best = Some((s, comb.clone(), a, a0));
            }
        }
        if !next_combination(&mut comb, np) {
            break;
        }
    }
    let (_, support, a, a0) = best.ok_or(Error::RankDeficient { rank: 0, cols: k })?;
    Ok((support, a, a0))
}

/// Support chosen by `min sum |r_i|` with `|a_j| <= a_bar z_j` and
/// `sum z = k`.
fn milp_support(x: &DMatrix<f64>, y: &DVector<f64>, k: usize, a_bar: f64, opts: &MilpOptions) -> Result<Vec<usize>> {
    let (n, np) = x.shape();
    // Variables: a (np), a0, z (np), t (n).
    let ia0 = np;
    let iz = np + 1;
    let it = 2 * np + 1;
    let nv = it + n;
    let mut c = DVector::zeros(nv);
    c.rows_mut(it, n).fill(1.0);
    let mut lp = LpProblem::new(c);
    for j in 0..np {
        lp.set_bounds(j, -a_bar, a_bar);
        lp.set_bounds(iz + j, 0.0, 1.0);
    }
    lp.set_bounds(ia0, f64::NEG_INFINITY, f64::INFINITY);
    let mut rows = Vec::with_capacity(2 * n + 2 * np + 1);
    for i in 0..n {
        let mut up: Vec<(usize, f64)> = (0..np).map(|j| (j, x[(i, j)])).collect();
        up.push((ia0, 1.0));
        let mut down: Vec<(usize, f64)> = up.iter().map(|&(j, v)| (j, -v)).collect();
        up.push((it + i, 1.0));
        down.push((it + i, 1.0));
        rows.push((up, RowSense::Ge, y[i]));
        rows.push((down, RowSense::Ge, -y[i]));
    }
    for j in 0..np {
        rows.push((vec![(j, 1.0), (iz + j, -a_bar)], RowSense::Le, 0.0));
        rows.push((vec![(j, 1.0), (iz + j, a_bar)], RowSense::Ge, 0.0));
    }
    rows.push(((0..np).map(|j| (iz + j, 1.0)).collect(), RowSense::Eq, k as f64));
    let problem = MilpProblem::new(lp.with_sparse_rows(rows), (iz..iz + np).collect());
    let sol = solve_milp(&problem, opts)?;
    if !sol.status.has_solution() {
        return Err(Error::Solver(format!("subset MILP ended with status {:?}", sol.status)));
    }
    let mut support: Vec<usize> = (0..np).filter(|&j| sol.x[iz + j] > 0.5).collect();
    support.truncate(k);
    Ok(support)
}

/// Best model with exactly `n_p_tilde` inputs.
pub fn train_subset_selection(x: &DMatrix<f64>, y: &DVector<f64>, cfg: &SubsetConfig) -> Result<LinearModel> {
    check_xy(x, y)?;
    let np = x.ncols();
    if cfg.n_p_tilde == 0 || cfg.n_p_tilde > np {
        return invalid(format!("n_p_tilde must lie in 1..={np}, got {}", cfg.n_p_tilde));
    }
    let a_bar = match cfg.a_bar {
        Some(v) if v > 0.0 => v,
        Some(v) => return invalid(format!("a_bar must be positive, got {v}")),
        None => default_a_bar(x, y),
    };
    let (support, a, a0) = match cfg.mode {
        SubsetMode::Enumerate => enumerate(x, y, cfg.n_p_tilde)?,
        SubsetMode::Miqp => {
            let opts = MilpOptions { tol: cfg.milp.tol.max(DEFAULT_TOL), ..cfg.milp.clone() };
            let support = milp_support(x, y, cfg.n_p_tilde, a_bar, &opts)?;
            let (a, a0) = olsr_on_support(x, y, &support)?;
            (support, a, a0)
        }
    };
    Ok(LinearModel {
        a,
        a0,
        provenance: Provenance::Subset { n_p_tilde: cfg.n_p_tilde, a_bar, mode: cfg.mode, support },
    })
}
