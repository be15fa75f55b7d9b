//! A priori labeling of training data by k-means clustering.

use nalgebra::DMatrix;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::seed::derive_seed;

/// Class assignment of the training rows, classes numbered `1..=k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    pub assignment: Vec<usize>,
    pub k: usize,
    /// Within-cluster sum of squared distances.
    pub inertia: f64,
    pub centroids: Vec<Vec<f64>>,
    /// True when an empty cluster had to be filled by moving a point.
    #[serde(default)]
    pub repaired: bool,
}

impl Labels {
    /// Labels from a given assignment; centroids and inertia are computed
    /// from `x`.
    pub fn from_assignment(x: &DMatrix<f64>, assignment: Vec<usize>, k: usize) -> Result<Self> {
        if assignment.len() != x.nrows() {
            return Err(Error::Dimension { expected: x.nrows(), got: assignment.len() });
        }
        if let Some(&c) = assignment.iter().find(|&&c| c == 0 || c > k) {
            return invalid(format!("class index {c} outside 1..={k}"));
        }
        let zero_based: Vec<usize> = assignment.iter().map(|c| c - 1).collect();
        let centroids = centroids_of(x, &zero_based, k);
        let inertia = inertia_of(x, &zero_based, &centroids);
        let labels = Labels { assignment, k, inertia, centroids, repaired: false };
        labels.validate()?;
        Ok(labels)
    }

    /// Two-class labels from a binary vector, `z_i = 1` meaning class 1.
    pub fn from_binary(x: &DMatrix<f64>, z: &[bool]) -> Result<Self> {
        Self::from_assignment(x, z.iter().map(|&b| if b { 1 } else { 2 }).collect(), 2)
    }

    pub fn validate(&self) -> Result<()> {
        for c in 1..=self.k {
            if !self.assignment.contains(&c) {
                return invalid(format!("class {c} is empty"));
            }
        }
        Ok(())
    }

    pub fn class_size(&self, class: usize) -> usize {
        self.assignment.iter().filter(|&&c| c == class).count()
    }

    pub fn rows_of(&self, class: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == class).collect()
    }

    /// `z_i = (class == 1)`.
    pub fn to_binary(&self) -> Vec<bool> {
        self.assignment.iter().map(|&c| c == 1).collect()
    }
}

fn dist2(x: &DMatrix<f64>, i: usize, c: &[f64]) -> f64 {
    c.iter().enumerate().map(|(j, v)| (x[(i, j)] - v).powi(2)).sum()
}

fn centroids_of(x: &DMatrix<f64>, assign: &[usize], k: usize) -> Vec<Vec<f64>> {
    let d = x.ncols();
    let mut sums = vec![vec![0.0; d]; k];
    let mut counts = vec![0usize; k];
    for (i, &c) in assign.iter().enumerate() {
        counts[c] += 1;
        for j in 0..d {
            sums[c][j] += x[(i, j)];
        }
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            s.iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    sums
}

fn inertia_of(x: &DMatrix<f64>, assign: &[usize], centroids: &[Vec<f64>]) -> f64 {
    assign.iter().enumerate().map(|(i, &c)| dist2(x, i, &centroids[c])).sum()
}

fn nearest(x: &DMatrix<f64>, i: usize, centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut bd = f64::INFINITY;
    for (c, cen) in centroids.iter().enumerate() {
        let d = dist2(x, i, cen);
        if d < bd {
            bd = d;
            best = c;
        }
    }
    best
}

/// k-means++ seeding.
fn init_plus_plus(x: &DMatrix<f64>, k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = x.nrows();
    let row = |i: usize| x.row(i).iter().copied().collect::<Vec<f64>>();
    let mut centroids = vec![row(rng.random_range(0..n))];
    let mut d2: Vec<f64> = (0..n).map(|i| dist2(x, i, &centroids[0])).collect();
    while centroids.len() < k {
        let pick = match WeightedIndex::new(&d2) {
            Ok(w) => w.sample(rng),
            Err(_) => rng.random_range(0..n),
        };
        let c = row(pick);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(dist2(x, i, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Moves the point farthest from its centroid into each empty cluster,
/// taking only from clusters that keep at least one member.
fn repair_empty(x: &DMatrix<f64>, assign: &mut [usize], centroids: &mut [Vec<f64>]) -> bool {
    let k = centroids.len();
    let mut repaired = false;
    for c in 0..k {
        let mut counts = vec![0usize; k];
        assign.iter().for_each(|&a| counts[a] += 1);
        if counts[c] > 0 {
            continue;
        }
        let donor = (0..assign.len())
            .filter(|&i| counts[assign[i]] > 1)
            .max_by(|&i, &j| {
                dist2(x, i, &centroids[assign[i]]).total_cmp(&dist2(x, j, &centroids[assign[j]])).then(j.cmp(&i))
            });
        if let Some(i) = donor {
            assign[i] = c;
            centroids[c] = x.row(i).iter().copied().collect();
            repaired = true;
        }
    }
    repaired
}

fn lloyd(x: &DMatrix<f64>, k: usize, max_iter: usize, rng: &mut impl Rng) -> (Vec<usize>, Vec<Vec<f64>>, f64, bool) {
    let n = x.nrows();
    let mut centroids = init_plus_plus(x, k, rng);
    let mut assign: Vec<usize> = (0..n).map(|i| nearest(x, i, &centroids)).collect();
    let mut repaired = false;
    for _ in 0..max_iter {
        repaired |= repair_empty(x, &mut assign, &mut centroids);
        centroids = centroids_of(x, &assign, k);
        let next: Vec<usize> = (0..n).map(|i| nearest(x, i, &centroids)).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    repaired |= repair_empty(x, &mut assign, &mut centroids);
    let centroids = centroids_of(x, &assign, k);
    let inertia = inertia_of(x, &assign, &centroids);
    (assign, centroids, inertia, repaired)
}

/// Lloyd's algorithm from `restarts` k-means++ seedings; the lowest-inertia
/// run wins (ties to the earlier restart). Classes are renumbered by
/// ascending centroid coordinates, first coordinate first.
pub fn kmeans_label(x: &DMatrix<f64>, k: usize, seed: u64, restarts: usize, max_iter: usize) -> Result<Labels> {
    let n = x.nrows();
    if k < 1 {
        return invalid("k must be at least 1");
    }
    if k > n {
        return invalid(format!("k = {k} exceeds the number of points {n}"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return invalid("non-finite input to k-means");
    }
    let mut best: Option<(Vec<usize>, Vec<Vec<f64>>, f64, bool)> = None;
    for r in 0..restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, r as u64));
        let run = lloyd(x, k, max_iter, &mut rng);
        if best.as_ref().is_none_or(|b| run.2 < b.2) {
            best = Some(run);
        }
    }
    let (assign, centroids, inertia, repaired) = best.expect("at least one restart");
    if repaired {
        log::warn!("k-means produced an empty cluster; repaired by moving the farthest point");
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        centroids[a]
            .iter()
            .zip(&centroids[b])
            .map(|(u, v)| u.total_cmp(v))
            .find(|o| o.is_ne())
            .unwrap_or(a.cmp(&b))
    });
    let mut rank = vec![0; k];
    for (pos, &c) in order.iter().enumerate() {
        rank[c] = pos;
    }
    Ok(Labels {
        assignment: assign.iter().map(|&c| rank[c] + 1).collect(),
        k,
        inertia,
        centroids: order.iter().map(|&c| centroids[c].clone()).collect(),
        repaired,
    })
}
