use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{invalid, Error, Result};

/// Physical constants, operating box and noise level of the synthetic
/// pressure-compensated temperature (PCT) process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PctParams {
    /// Gas constant in J/(mol K). 8.314 reproduces the operating-region
    /// bounds 635.3 K and 1151.4 K; the rounded 8.3 does not.
    pub r: f64,
    /// Heat of vaporization in J/mol.
    pub hv: f64,
    /// Reference pressure.
    pub p_ref: f64,
    pub t_range: (f64, f64),
    pub p_range: (f64, f64),
    /// Standard deviation of the output noise in Kelvin.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for PctParams {
    fn default() -> Self {
        PctParams {
            r: 8.314,
            hv: 55940.6,
            p_ref: 145.3,
            t_range: (523.2, 573.2),
            p_range: (0.4, 15.0),
            noise_sigma: 5.0,
            seed: 0,
        }
    }
}

impl PctParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.hv > 0.0) || !(self.p_ref > 0.0) || !(self.r > 0.0) {
            return invalid("R, Hv and p_ref must be positive");
        }
        if !(self.noise_sigma >= 0.0) {
            return invalid("noise_sigma must be nonnegative");
        }
        for (name, (lo, hi)) in [("T", self.t_range), ("p", self.p_range)] {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return invalid(format!("{name} range is empty"));
            }
        }
        Ok(())
    }
}

/// Rectangular sub-region of the (T, p) operating box with its sample count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub t_range: (f64, f64),
    pub p_range: (f64, f64),
    pub count: usize,
}

impl Regime {
    pub fn new(t_range: (f64, f64), p_range: (f64, f64), count: usize) -> Self {
        Regime { t_range, p_range, count }
    }
}

/// Noiseless PCT from the Antoine/Clausius-Clapeyron relation
/// `1/PCT = (R/Hv) ln(p/p_ref) + 1/T`.
pub fn pct(params: &PctParams, t: f64, p: f64) -> Result<f64> {
    if !(t > 0.0) || !(p > 0.0) {
        return Err(Error::Domain(format!("T and p must be positive (T={t}, p={p})")));
    }
    let inv = params.r / params.hv * (p / params.p_ref).ln() + 1.0 / t;
    if !(inv > 0.0) {
        return Err(Error::Domain(format!("PCT undefined at T={t}, p={p}")));
    }
    Ok(1.0 / inv)
}

fn contains(outer: (f64, f64), inner: (f64, f64)) -> bool {
    let slack = 1e-9 * (1.0 + outer.1.abs());
    inner.0 >= outer.0 - slack && inner.1 <= outer.1 + slack && inner.0 <= inner.1
}

/// Samples each regime uniformly, evaluates PCT and adds Gaussian noise in
/// Kelvin. Inputs are `[T, p]`, the output is `PCT`. Returns the dataset and
/// the 1-based regime label of every row.
pub fn generate_pct_dataset(params: &PctParams, regimes: &[Regime]) -> Result<(Dataset, Vec<usize>)> {
    params.validate()?;
    if regimes.is_empty() {
        return invalid("at least one regime is required");
    }
    for (k, g) in regimes.iter().enumerate() {
        if g.count == 0 {
            return invalid(format!("regime {} has no samples", k + 1));
        }
        if g.t_range.0 <= 0.0 || g.p_range.0 <= 0.0 {
            return Err(Error::Domain(format!("regime {} has non-positive T or p", k + 1)));
        }
        if !contains(params.t_range, g.t_range) || !contains(params.p_range, g.p_range) {
            return invalid(format!("regime {} lies outside the operating region", k + 1));
        }
    }
    let n: usize = regimes.iter().map(|g| g.count).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let noise = Normal::new(0.0, params.noise_sigma).map_err(|e| Error::Invalid(e.to_string()))?;
    let mut m = DMatrix::zeros(n, 2);
    let mut y = DVector::zeros(n);
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    for (k, g) in regimes.iter().enumerate() {
        for _ in 0..g.count {
            let t = g.t_range.0 + (g.t_range.1 - g.t_range.0) * rng.random::<f64>();
            let p = g.p_range.0 + (g.p_range.1 - g.p_range.0) * rng.random::<f64>();
            let e = noise.sample(&mut rng);
            m[(row, 0)] = t;
            m[(row, 1)] = p;
            y[row] = pct(params, t, p)? + e;
            labels.push(k + 1);
            row += 1;
        }
    }
    let ds = Dataset::new(m, y, vec!["T".into(), "p".into()], "PCT")?;
    Ok((ds, labels))
}
