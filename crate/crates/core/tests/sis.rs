use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use softsensor_core::sis::*;

fn uniform(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.random_range(0.0..1.0))
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn sse(m: &LinearModel, x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    (predict_linear(m, x).unwrap() - y).norm_squared()
}

fn rmse(m: &LinearModel, x: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    (sse(m, x, y) / y.len() as f64).sqrt()
}

#[test]
fn olsr_matches_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = uniform(&mut rng, 10, 3);
    let y = DVector::from_fn(10, |_, _| rng.random_range(-1.0..1.0));
    let m = train_olsr(&x, &y).unwrap();
    let xa = DMatrix::from_fn(10, 4, |i, j| if j < 3 { x[(i, j)] } else { 1.0 });
    let beta = (xa.transpose() * &xa).lu().solve(&(xa.transpose() * &y)).unwrap();
    for j in 0..3 {
        assert!((m.a[j] - beta[j]).abs() <= 1e-9);
    }
    assert!((m.a0 - beta[3]).abs() <= 1e-9);
}

#[test]
fn predict_linear_uses_every_row() {
    let m = LinearModel::new(DVector::from_vec(vec![2.0, -1.0]), 0.5);
    let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 2.0, 2.0]);
    assert_eq!(predict_linear(&m, &x).unwrap().as_slice(), &[2.5, -0.5, 2.5]);
    assert!(predict_linear(&m, &DMatrix::zeros(2, 3)).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn olsr_residual_is_orthogonal(seed in any::<u64>(), n in 5usize..40, p in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = uniform(&mut rng, n, p);
        let y = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
        let m = train_olsr(&x, &y).unwrap();
        let r = &y - predict_linear(&m, &x).unwrap();
        let scale = 1.0 + y.norm();
        prop_assert!(r.sum().abs() <= 1e-9 * scale);
        for j in 0..p {
            prop_assert!(x.column(j).dot(&r).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn lasso_without_penalty_is_olsr(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = uniform(&mut rng, 30, 3);
        let y = DVector::from_fn(30, |i, _| x[(i, 0)] - 2.0 * x[(i, 2)] + 0.1 * normal(&mut rng));
        let o = train_olsr(&x, &y).unwrap();
        let l = train_lasso(&x, &y, &LassoConfig { lambda: 0.0, refit: false }).unwrap();
        for j in 0..3 {
            prop_assert!((o.a[j] - l.a[j]).abs() <= 1e-6);
        }
        prop_assert!((o.a0 - l.a0).abs() <= 1e-6);
    }

    #[test]
    fn lasso_zero_threshold(seed in any::<u64>(), extra in 0.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = uniform(&mut rng, 25, 4);
        let y = DVector::from_fn(25, |i, _| 3.0 * x[(i, 1)] + normal(&mut rng));
        let yc = y.add_scalar(-y.mean());
        let lam_max = (0..4).map(|j| {
            let col = x.column(j);
            col.add_scalar(-col.mean()).dot(&yc).abs()
        }).fold(0.0, f64::max);
        for refit in [false, true] {
            let m = train_lasso(&x, &y, &LassoConfig { lambda: lam_max * (1.0 + extra), refit }).unwrap();
            prop_assert!(m.support().is_empty());
            prop_assert!((m.a0 - y.mean()).abs() <= 1e-12);
        }
        // just below the threshold something enters
        let m = train_lasso(&x, &y, &LassoConfig { lambda: lam_max * 0.9, refit: false }).unwrap();
        prop_assert!(!m.support().is_empty());
    }

    #[test]
    fn subset_beats_every_manual_support(seed in any::<u64>(), k in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = uniform(&mut rng, 20, 4);
        let y = DVector::from_fn(20, |_, _| normal(&mut rng));
        let best = train_subset_selection(&x, &y, &SubsetConfig::new(k)).unwrap();
        prop_assert_eq!(best.support().len(), k);
        let best_sse = sse(&best, &x, &y);
        for mask in 0u32..16 {
            if mask.count_ones() as usize != k {
                continue;
            }
            let cols: Vec<usize> = (0..4).filter(|j| mask >> j & 1 == 1).collect();
            let xs = x.select_columns(cols.iter());
            let m = train_olsr(&xs, &y).unwrap();
            prop_assert!(best_sse <= sse(&m, &xs, &y) + 1e-9);
        }
    }
}

#[test]
fn lasso_recovers_a_single_relevant_input() {
    let mut hits = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = uniform(&mut rng, 50, 6);
        let y = DVector::from_fn(50, |i, _| 3.0 * x[(i, 0)] + 0.1 * normal(&mut rng));
        let m = train_lasso(&x, &y, &LassoConfig::new(1.0)).unwrap();
        hits += usize::from(m.support() == vec![0]);
    }
    assert!(hits >= 95, "{hits}/100");
}

#[test]
fn components_at_full_rank_equal_olsr() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = uniform(&mut rng, 40, 4);
    let y = DVector::from_fn(40, |_, _| normal(&mut rng));
    let o = predict_linear(&train_olsr(&x, &y).unwrap(), &x).unwrap();
    let cfg = ComponentConfig { n_pc: 4 };
    for m in [train_pcr(&x, &y, &cfg).unwrap(), train_plsr(&x, &y, &cfg).unwrap()] {
        let p = predict_linear(&m, &x).unwrap();
        assert!((p - &o).amax() <= 1e-8);
    }
    assert!(train_pcr(&x, &y, &ComponentConfig { n_pc: 5 }).is_err());
    assert!(train_pcr(&x, &y, &ComponentConfig { n_pc: 0 }).is_err());
}

#[test]
fn pcr_follows_the_dominant_direction() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let u = DVector::from_vec(vec![1.0, 2.0, -1.0]).normalize();
    let t: Vec<f64> = (0..200).map(|_| 3.0 * normal(&mut rng)).collect();
    let x = DMatrix::from_fn(200, 3, |i, j| t[i] * u[j] + 0.01 * normal(&mut rng));
    let y = DVector::from_fn(200, |i, _| t[i] + 0.1 * normal(&mut rng));
    let m = train_pcr(&x, &y, &ComponentConfig { n_pc: 1 }).unwrap();
    let cos = m.a.dot(&u) / m.a.norm();
    assert!(cos >= 0.999, "cosine {cos}");
}

#[test]
fn plsr_weights_the_relevant_input_most() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let x = uniform(&mut rng, 80, 5);
    let y = DVector::from_fn(80, |i, _| 2.0 * x[(i, 3)] + 0.05 * normal(&mut rng));
    let m = train_plsr(&x, &y, &ComponentConfig { n_pc: 1 }).unwrap();
    let top = (0..5).max_by(|&i, &j| m.a[i].abs().total_cmp(&m.a[j].abs())).unwrap();
    assert_eq!(top, 3);
}

#[test]
fn plsr_on_pure_noise_explains_little() {
    let mut ok = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let x = uniform(&mut rng, 100, 4);
        let y = DVector::from_fn(100, |_, _| normal(&mut rng));
        let m = train_plsr(&x, &y, &ComponentConfig { n_pc: 1 }).unwrap();
        let sd = (y.add_scalar(-y.mean()).norm_squared() / 100.0).sqrt();
        ok += usize::from(rmse(&m, &x, &y) >= 0.95 * sd);
    }
    assert!(ok >= 90, "{ok}/100");
}

#[test]
fn pcr_cv_finds_the_latent_rank() {
    let mut hits = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
        let load = DMatrix::from_fn(2, 5, |_, _| normal(&mut rng));
        let f = DMatrix::from_fn(120, 2, |_, _| normal(&mut rng));
        let x = &f * &load;
        let y = DVector::from_fn(120, |i, _| f[(i, 0)] - f[(i, 1)] + 0.1 * normal(&mut rng));
        let grid: Vec<ComponentConfig> = (1..=5).map(|n_pc| ComponentConfig { n_pc }).collect();
        let cv = cross_validate(train_pcr, &x, &y, &grid, 5, seed).unwrap();
        assert!(cv.mean_rmse[2..].iter().all(|v| v.is_infinite()));
        hits += usize::from(cv.best.n_pc == 2);
    }
    assert!(hits >= 90, "{hits}/100");
}

#[test]
fn subset_selection_recovers_a_planted_pair() {
    let mut hits = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + seed);
        let x = uniform(&mut rng, 40, 6);
        let y = DVector::from_fn(40, |i, _| 2.0 * x[(i, 1)] - 1.5 * x[(i, 4)] + 0.1 * normal(&mut rng));
        let m = train_subset_selection(&x, &y, &SubsetConfig::new(2)).unwrap();
        hits += usize::from(m.support() == vec![1, 4]);
    }
    assert!(hits >= 95, "{hits}/100");
}

#[test]
fn subset_milp_mode_agrees_on_a_clear_support() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let x = uniform(&mut rng, 30, 4);
    let y = DVector::from_fn(30, |i, _| 2.0 * x[(i, 0)] + 1.0 * x[(i, 2)] + 0.01 * normal(&mut rng));
    let cfg = SubsetConfig { mode: SubsetMode::Miqp, ..SubsetConfig::new(2) };
    let m = train_subset_selection(&x, &y, &cfg).unwrap();
    assert_eq!(m.support(), vec![0, 2]);
}

#[test]
fn full_subset_is_olsr() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x = uniform(&mut rng, 25, 3);
    let y = DVector::from_fn(25, |_, _| normal(&mut rng));
    let s = train_subset_selection(&x, &y, &SubsetConfig::new(3)).unwrap();
    let o = train_olsr(&x, &y).unwrap();
    assert!((s.a - o.a).amax() <= 1e-10 && (s.a0 - o.a0).abs() <= 1e-10);
}

#[test]
fn cross_validation_is_seeded() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = uniform(&mut rng, 60, 5);
    let y = DVector::from_fn(60, |i, _| x[(i, 0)] + 0.3 * normal(&mut rng));
    let grid: Vec<LassoConfig> = (0..6).map(|k| LassoConfig::new(10f64.powi(k - 4))).collect();
    let a = cross_validate(train_lasso, &x, &y, &grid, 5, 9).unwrap();
    let b = cross_validate(train_lasso, &x, &y, &grid, 5, 9).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.mean_rmse.len(), 6);
    assert!(cross_validate(train_lasso, &x, &y, &grid, 1, 9).is_err());
}
