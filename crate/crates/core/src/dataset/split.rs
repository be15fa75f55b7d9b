use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{invalid, Error, Result};

/// Disjoint train/test row indices, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.train.is_empty() {
            return invalid("training set is empty");
        }
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.test) {
            if i >= n || seen[i] {
                return invalid(format!("split does not partition 0..{n}"));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return invalid(format!("split does not partition 0..{n}"));
        }
        Ok(())
    }
}

/// Random split with `round(train_fraction * n)` training rows (halves
/// round up, so 621 rows at 0.5 give 311/310).
pub fn split_random(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return invalid(format!("train fraction {train_fraction} outside (0, 1)"));
    }
    let n = ds.len();
    let n_train = (train_fraction * n as f64 + 0.5).floor() as usize;
    if n_train < 2 {
        return invalid(format!("training set would have {n_train} rows"));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = perm[..n_train].to_vec();
    let mut test = perm[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

/// Training rows are those whose regime label is in `train_regimes`; the
/// rest form the test set.
pub fn split_by_regime(ds: &Dataset, regime_labels: &[usize], train_regimes: &BTreeSet<usize>) -> Result<Split> {
    if regime_labels.len() != ds.len() {
        return Err(Error::Dimension { expected: ds.len(), got: regime_labels.len() });
    }
    let (train, test): (Vec<usize>, Vec<usize>) =
        (0..ds.len()).partition(|&i| train_regimes.contains(&regime_labels[i]));
    if train.is_empty() {
        return invalid("no rows belong to the training regimes");
    }
    if test.is_empty() {
        return invalid("no rows left for testing");
    }
    Ok(Split { train, test })
}
