use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{predict_linear, ComponentConfig, LassoConfig, LinearModel, SubsetConfig};
use crate::dataset::rmse;
use crate::error::{invalid, Result};

/// Ordering key for the cross-validation tie-break: lower means simpler.
pub trait Complexity {
    fn complexity(&self) -> f64;
}

impl Complexity for LassoConfig {
    /// Larger penalties give sparser models.
    fn complexity(&self) -> f64 {
        -self.lambda
    }
}

impl Complexity for ComponentConfig {
    fn complexity(&self) -> f64 {
        self.n_pc as f64
    }
}

impl Complexity for SubsetConfig {
    fn complexity(&self) -> f64 {
        self.n_p_tilde as f64
    }
}

impl Complexity for usize {
    fn complexity(&self) -> f64 {
        *self as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult<H> {
    pub best: H,
    pub best_index: usize,
    /// Mean validation RMSE per grid entry, in grid order.
    pub mean_rmse: Vec<f64>,
}

/// k-fold cross-validation over `grid`. Rows are shuffled once with `seed`
/// and dealt round-robin into folds. The winner has the lowest mean
/// validation RMSE; exact ties go to the simpler entry. Entries the trainer
/// rejects score +inf; the call fails only if every entry is rejected.
pub fn cross_validate<H, F>(
    trainer: F,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    grid: &[H],
    folds: usize,
    seed: u64,
) -> Result<CvResult<H>>
where
    H: Clone + Complexity,
    F: Fn(&DMatrix<f64>, &DVector<f64>, &H) -> Result<LinearModel>,
{
    if grid.is_empty() {
        return invalid("empty hyperparameter grid");
    }
    let n = x.nrows();
    if folds < 2 || folds > n {
        return invalid(format!("folds must lie in 2..={n}, got {folds}"));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_rows = vec![Vec::new(); folds];
    for (pos, &i) in perm.iter().enumerate() {
        fold_rows[pos % folds].push(i);
    }
    for f in &mut fold_rows {
        f.sort_unstable();
    }
    if n - fold_rows.iter().map(Vec::len).max().unwrap_or(0) < 2 {
        return invalid("a fold leaves fewer than 2 training rows");
    }

    let mut mean_rmse = Vec::with_capacity(grid.len());
    let mut last_err = None;
    for h in grid {
        let mut total = 0.0;
        for (f, val) in fold_rows.iter().enumerate() {
            let train: Vec<usize> = fold_rows
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .flat_map(|(_, r)| r.iter().copied())
                .collect();
            // An entry the trainer rejects on some fold (say, more
            // components than the data's rank) scores +inf.
            let model = match trainer(&x.select_rows(train.iter()), &y.select_rows(train.iter()), h) {
                Ok(m) => m,
                Err(e) => {
                    log::debug!("cv entry {} failed on fold {f}: {e}", mean_rmse.len());
                    last_err = Some(e);
                    total = f64::INFINITY;
                    break;
                }
            };
            let pred = predict_linear(&model, &x.select_rows(val.iter()))?;
            let truth = y.select_rows(val.iter());
            total += rmse(truth.as_slice(), pred.as_slice())?;
        }
        mean_rmse.push(total / folds as f64);
    }
    if mean_rmse.iter().all(|v| v.is_infinite()) {
        return Err(last_err.expect("every entry failed"));
    }

    let mut best_index = 0;
    for k in 1..grid.len() {
        let (cur, cand) = (mean_rmse[best_index], mean_rmse[k]);
        let tie = (cand - cur).abs() <= 1e-12 * cur.abs().max(1.0);
        if (!tie && cand < cur) || (tie && grid[k].complexity() < grid[best_index].complexity()) {
            best_index = k;
        }
    }
    Ok(CvResult { best: grid[best_index].clone(), best_index, mean_rmse })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sis::{train_lasso, LassoConfig};

    fn data() -> (DMatrix<f64>, DVector<f64>) {
        let x = DMatrix::from_fn(20, 2, |i, j| ((i * 13 + j * 7) % 11) as f64);
        let y = DVector::from_fn(20, |i, _| x[(i, 0)] + 0.1 * (i % 3) as f64);
        (x, y)
    }

    #[test]
    fn single_entry_grid() {
        let (x, y) = data();
        let r = cross_validate(|x, y, h| train_lasso(x, y, h), &x, &y, &[LassoConfig::new(0.3)], 4, 1).unwrap();
        assert_eq!(r.best_index, 0);
        assert_eq!(r.mean_rmse.len(), 1);
    }

    #[test]
    fn tie_prefers_larger_penalty() {
        let (x, y) = data();
        // Both penalties exceed the shrinkage threshold, so both models are
        // the constant mean and the CV errors coincide exactly.
        let grid = [LassoConfig::new(1e6), LassoConfig::new(1e7)];
        let r = cross_validate(|x, y, h| train_lasso(x, y, h), &x, &y, &grid, 5, 3).unwrap();
        assert_eq!(r.mean_rmse[0], r.mean_rmse[1]);
        assert_eq!(r.best_index, 1);
    }

    #[test]
    fn fold_count_is_checked() {
        let (x, y) = data();
        assert!(cross_validate(|x, y, h| train_lasso(x, y, h), &x, &y, &[LassoConfig::new(0.1)], 1, 0).is_err());
        let empty: [LassoConfig; 0] = [];
        assert!(cross_validate(|x, y, h| train_lasso(x, y, h), &x, &y, &empty, 2, 0).is_err());
    }
}
