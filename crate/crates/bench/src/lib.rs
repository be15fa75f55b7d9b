//! Shared fixtures for the criterion benchmarks.

use nalgebra::{DMatrix, DVector};
use softsensor_core::dataset::{generate_pct_dataset, normalize, NormMode, PctParams, Regime};
use softsensor_core::optim::{LpProblem, RowSense};

/// Normalized two-regime PCT data with `per_regime` rows in each regime.
pub fn pct_two_cluster(per_regime: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let regimes = [
        Regime::new((523.2, 548.2), (0.8, 1.5), per_regime),
        Regime::new((548.2, 573.2), (2.0, 4.0), per_regime),
    ];
    let params = PctParams { seed, ..PctParams::default() };
    let (ds, _) = generate_pct_dataset(&params, &regimes).expect("valid regimes");
    let (nd, _) = normalize(&ds, NormMode::UnitInterval).expect("non-constant columns");
    (nd.inputs, nd.output)
}

/// Dense box-bounded LP with `m` rows of a fixed pseudo-random pattern.
pub fn box_lp(n: usize, m: usize) -> LpProblem {
    let val = |i: usize, j: usize| (((i * 31 + j * 17) % 23) as f64 / 11.0) - 1.0;
    let c = DVector::from_fn(n, |j, _| val(j, 7));
    let rows = (0..m).map(|i| ((0..n).map(|j| val(i, j)).collect(), RowSense::Le, 1.0 + (i % 3) as f64)).collect();
    let mut p = LpProblem::new(c).with_rows(rows);
    for j in 0..n {
        p.set_bounds(j, -1.0, 1.0);
    }
    p
}
