use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::con::train_mis_con;
use super::sae::{point_cost, solve_fixed_labels, SaeFit};
use super::{bbox, check_training, fill_class_rmse, sub_model, MilpSummary, MisConfig, MisMeta, MisMethod, MultiModel};
use crate::classify::Hyperplane;
use crate::error::{Error, Result};
use crate::labeling::{kmeans_label, Labels};
use crate::seed::derive_seed;
use crate::optim::{solve_milp, LpProblem, MilpOptions, MilpProblem, RowSense};
use crate::sis::train_olsr;

/// The labeling MILP with its variable layout. Variables are
/// `a1, a01, a2, a02, w, w0` (each boxed by `a_bar`), the labels `z`, the
/// epigraph variables `t1, t2`, the slacks `e` and `u >= |w|`.
#[derive(Debug, Clone)]
pub struct LabelMilp {
    pub problem: MilpProblem,
    pub big_m: f64,
    pub a_bar: f64,
    pub n: usize,
    pub np: usize,
}

impl LabelMilp {
    pub fn z_offset(&self) -> usize {
        3 * self.np + 3
    }

    pub fn labels_of(&self, x: &[f64]) -> Vec<bool> {
        let iz = self.z_offset();
        (0..self.n).map(|i| x[iz + i] > 0.5).collect()
    }
}

/// Default coefficient bound of the labeling MILP: ten times the largest
/// OLSR coefficient or offset magnitude, at least 10.
pub fn default_a_bar(x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let scale = match train_olsr(x, y) {
        Ok(m) => m.a.amax().max(m.a0.abs()),
        Err(_) => 0.0,
    };
    10.0 * scale.max(1.0)
}

/// Builds `min sum t1 + sum t2 + alpha sum u + beta sum e` where, per
/// point, `t1` bounds the model-1 residual unless `z_i = 0`, `t2` the
/// model-2 residual unless `z_i = 1`, and the margin constraint of the
/// point's class holds up to `e_i`. Continuity enters as `a1 - a2 = w`,
/// `a01 - a02 = w0`.
pub fn build_label_milp(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    alpha: f64,
    beta: f64,
    a_bar: f64,
    big_m: Option<f64>,
) -> LabelMilp {
    let (n, np) = x.shape();
    let max_m1 = (0..n).map(|i| x.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let m = big_m.unwrap_or(2.0 * (y.amax() + a_bar * (max_m1 + 1.0) + 1.0));
    let (i2, iw, iz) = (np + 1, 2 * np + 2, 3 * np + 3);
    let (it1, it2, ie, iu) = (iz + n, iz + 2 * n, iz + 3 * n, iz + 4 * n);
    let nv = iu + np;
    let mut c = DVector::zeros(nv);
    c.rows_mut(it1, 2 * n).fill(1.0);
    c.rows_mut(ie, n).fill(beta);
    c.rows_mut(iu, np).fill(alpha);
    let mut lp = LpProblem::new(c);
    for j in 0..iz {
        lp.set_bounds(j, -a_bar, a_bar);
    }
    for i in 0..n {
        lp.set_bounds(iz + i, 0.0, 1.0);
    }
    let mut rows: Vec<(Vec<(usize, f64)>, RowSense, f64)> = Vec::with_capacity(6 * n + 3 * np + 1);
    let model = |base: usize, i: usize, sign: f64| -> Vec<(usize, f64)> {
        let mut r: Vec<(usize, f64)> = (0..np).map(|j| (base + j, sign * x[(i, j)])).collect();
        r.push((base + np, sign));
        r
    };
    for i in 0..n {
        let zi = iz + i;
        // t1 >= +-(y - model1) - M (1 - z)
        let mut r = model(0, i, 1.0);
        r.extend([(it1 + i, 1.0), (zi, -m)]);
        rows.push((r, RowSense::Ge, y[i] - m));
        let mut r = model(0, i, -1.0);
        r.extend([(it1 + i, 1.0), (zi, -m)]);
        rows.push((r, RowSense::Ge, -y[i] - m));
        // t2 >= +-(y - model2) - M z
        let mut r = model(i2, i, 1.0);
        r.extend([(it2 + i, 1.0), (zi, m)]);
        rows.push((r, RowSense::Ge, y[i]));
        let mut r = model(i2, i, -1.0);
        r.extend([(it2 + i, 1.0), (zi, m)]);
        rows.push((r, RowSense::Ge, -y[i]));
        // (2z - 1)(m^T w + w0) >= 1 - e, one inequality per label value
        let mut r = model(iw, i, 1.0);
        r.extend([(ie + i, 1.0), (zi, -m)]);
        rows.push((r, RowSense::Ge, 1.0 - m));
        let mut r = model(iw, i, -1.0);
        r.extend([(ie + i, 1.0), (zi, m)]);
        rows.push((r, RowSense::Ge, 1.0));
    }
    for j in 0..np {
        rows.push((vec![(iu + j, 1.0), (iw + j, -1.0)], RowSense::Ge, 0.0));
        rows.push((vec![(iu + j, 1.0), (iw + j, 1.0)], RowSense::Ge, 0.0));
    }
    for r in 0..=np {
        rows.push((vec![(r, 1.0), (i2 + r, -1.0), (iw + r, -1.0)], RowSense::Eq, 0.0));
    }
    let lp = lp.with_sparse_rows(rows);
    LabelMilp { problem: MilpProblem::new(lp, (iz..iz + n).collect()), big_m: m, a_bar, n, np }
}

/// Alternates between the optimal parameters for the current labels and
/// the best label of every point for those parameters. Each accepted round
/// strictly lowers the objective.
fn label_search(x: &DMatrix<f64>, y: &DVector<f64>, z0: Vec<bool>, alpha: f64, beta: f64) -> Result<(Vec<bool>, SaeFit, usize)> {
    let mut z = z0;
    let mut fit = solve_fixed_labels(x, y, &z, alpha, beta)?;
    let mut rounds = 0;
    for _ in 0..200 {
        let next: Vec<bool> = (0..x.nrows())
            .map(|i| {
                let (p1, p2, v) = fit.theta.eval(x, i);
                let c1 = point_cost(y[i], p1, p2, v, true, beta);
                let c0 = point_cost(y[i], p1, p2, v, false, beta);
                if c1 == c0 {
                    z[i]
                } else {
                    c1 < c0
                }
            })
            .collect();
        if next == z {
            break;
        }
        let cand = solve_fixed_labels(x, y, &next, alpha, beta)?;
        if cand.objective >= fit.objective - 1e-12 * fit.objective.abs().max(1.0) {
            break;
        }
        z = next;
        fit = cand;
        rounds += 1;
    }
    Ok((z, fit, rounds))
}

/// Two-plane max-affine least squares from an initial partition: refit
/// each plane on its class, reassign each point to the larger plane,
/// repeat. Returns `None` when a class becomes too small to fit.
fn max_affine_labels(x: &DMatrix<f64>, y: &DVector<f64>, mut z: Vec<bool>, min_class: usize) -> Option<Vec<bool>> {
    for _ in 0..100 {
        let rows1: Vec<usize> = (0..z.len()).filter(|&i| z[i]).collect();
        let rows0: Vec<usize> = (0..z.len()).filter(|&i| !z[i]).collect();
        if rows1.len() < min_class || rows0.len() < min_class {
            return None;
        }
        let fit = |r: &[usize]| train_olsr(&x.select_rows(r.iter()), &y.select_rows(r.iter())).ok();
        let (m1, m0) = (fit(&rows1)?, fit(&rows0)?);
        let p1 = x * &m1.a;
        let p0 = x * &m0.a;
        let next: Vec<bool> = (0..z.len()).map(|i| p1[i] + m1.a0 >= p0[i] + m0.a0).collect();
        if next == z {
            break;
        }
        z = next;
    }
    Some(z)
}

/// Seeded start labelings for the label search: splits of the data by
/// random hyperplanes through a random training point, each polished as a
/// max-affine fit.
fn extra_starts(x: &DMatrix<f64>, y: &DVector<f64>, count: usize, seed: u64, min_class: usize) -> Vec<Vec<bool>> {
    let (n, np) = x.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x1abe1));
    let mut starts = Vec::new();
    for _ in 0..count {
        let dir: Vec<f64> = (0..np).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let anchor = rng.random_range(0..n);
        let cut: f64 = (0..np).map(|j| dir[j] * x[(anchor, j)]).sum();
        let z: Vec<bool> = (0..n).map(|i| (0..np).map(|j| dir[j] * x[(i, j)]).sum::<f64>() >= cut).collect();
        if let Some(z) = max_affine_labels(x, y, z, min_class) {
            if !starts.contains(&z) {
                starts.push(z);
            }
        }
    }
    starts
}

/// Optimizes labels, boundary and both models jointly under the
/// absolute-error objective, then refits the chosen labeling with the
/// squared-error continuity QP.
///
/// The start labels come from `warm` (or from k-means followed by the
/// continuity trainer). An alternating label search improves them; for
/// training sets up to `exact_milp_max_points` rows the big-M MILP is then
/// solved by branch-and-bound from that incumbent. If the final labels
/// leave a class below the minimum size a single OLSR model is returned
/// with `meta.fallback` set.
pub fn train_mis_con_lab(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    cfg: &MisConfig,
    warm: Option<&MultiModel>,
) -> Result<MultiModel> {
    check_training(x, y)?;
    cfg.validate()?;
    let (n, np) = x.shape();
    let start = match warm {
        Some(mm) => mm.labels.to_binary(),
        None => {
            let labels = kmeans_label(x, 2, cfg.seed, cfg.kmeans_restarts, cfg.kmeans_max_iter)?;
            labels.to_binary()
        }
    };
    if start.len() != n {
        return Err(Error::Dimension { expected: n, got: start.len() });
    }
    let warm_fit = solve_fixed_labels(x, y, &start, cfg.alpha, cfg.beta)?;
    let (mut z, fit, mut rounds) = label_search(x, y, start, cfg.alpha, cfg.beta)?;
    let mut best_obj = fit.objective;
    for s in extra_starts(x, y, cfg.search_starts, cfg.seed, cfg.min_class(np)) {
        let (zs, fs, r) = label_search(x, y, s, cfg.alpha, cfg.beta)?;
        rounds += r;
        if fs.objective < best_obj - 1e-12 * best_obj.abs().max(1.0) {
            z = zs;
            best_obj = fs.objective;
        }
    }

    let mut milp_summary = None;
    if n <= cfg.exact_milp_max_points {
        let a_bar = cfg.a_bar.unwrap_or_else(|| default_a_bar(x, y));
        let lm = build_label_milp(x, y, cfg.alpha, cfg.beta, a_bar, cfg.big_m);
        let opts = MilpOptions { warm_start: Some(z.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()), ..cfg.milp.clone() };
        let sol = solve_milp(&lm.problem, &opts)?;
        if !sol.status.has_solution() {
            return Err(Error::NoIncumbent { best_bound: sol.best_bound });
        }
        let zm = lm.labels_of(&sol.x);
        let refit = solve_fixed_labels(x, y, &zm, cfg.alpha, cfg.beta)?;
        if refit.objective < best_obj {
            z = zm;
            best_obj = refit.objective;
        }
        milp_summary = Some(MilpSummary {
            status: sol.status,
            objective: sol.objective,
            best_bound: sol.best_bound,
            gap: sol.gap,
            nodes: sol.nodes,
        });
    }

    let sizes = (z.iter().filter(|&&b| b).count(), z.iter().filter(|&&b| !b).count());
    let min_class = cfg.min_class(np);
    let mut mm = if sizes.0 >= min_class && sizes.1 >= min_class {
        let labels = Labels::from_binary(x, &z)?;
        let mut mm = train_mis_con(x, y, &labels, cfg)?;
        mm.method = MisMethod::ConLab;
        for (m, c) in [(&mut mm.model1, 1), (&mut mm.model2, 2)] {
            *m = sub_model(m.a.clone(), m.a0, MisMethod::ConLab, c);
        }
        mm
    } else {
        log::warn!("optimized labels leave classes of sizes {sizes:?}; falling back to a single OLSR model");
        let m = train_olsr(x, y)?;
        let (bbox_lo, bbox_hi) = bbox(x);
        let sse: f64 = (x * &m.a).iter().zip(y.iter()).map(|(p, t)| (t - p - m.a0).powi(2)).sum();
        MultiModel {
            method: MisMethod::ConLab,
            model1: sub_model(m.a.clone(), m.a0, MisMethod::ConLab, 1),
            model2: sub_model(m.a, m.a0, MisMethod::ConLab, 2),
            boundary: Hyperplane::new(DVector::zeros(np), 0.0),
            labels: Labels {
                assignment: vec![1; n],
                k: 2,
                inertia: 0.0,
                centroids: Vec::new(),
                repaired: false,
            },
            normalization: None,
            meta: MisMeta { objective: sse, bbox_lo, bbox_hi, fallback: true, ..MisMeta::default() },
        }
    };
    mm.meta.label_objective_warm = Some(warm_fit.objective);
    mm.meta.label_objective_final = Some(best_obj);
    mm.meta.search_rounds = rounds;
    if let Some(s) = &milp_summary {
        mm.meta.statuses.insert("milp".into(), s.status);
    }
    mm.meta.milp = milp_summary;
    if !mm.meta.fallback {
        fill_class_rmse(&mut mm, x, y);
    }
    Ok(mm)
}

