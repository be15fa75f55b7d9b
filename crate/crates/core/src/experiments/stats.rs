use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Box-plot summary of one (method, scenario) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub count: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    /// Most extreme values within 1.5 IQR of the box.
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    /// Values beyond the whiskers, ascending.
    pub outliers: Vec<f64>,
}

/// Quantile of sorted data by linear interpolation between order
/// statistics at position `q (n - 1)`.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median, quartiles, whiskers and outliers under the 1.5 IQR rule.
pub fn box_stats(values: &[f64]) -> Result<BoxStats> {
    if values.len() < 4 {
        return invalid(format!("box statistics need at least 4 values, got {}", values.len()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return invalid("box statistics need finite values");
    }
    Ok(summarize(values))
}

/// [`box_stats`] without the size check; callers guarantee at least one
/// finite value.
pub(crate) fn summarize(values: &[f64]) -> BoxStats {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let (q25, median, q75) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
    let iqr = q75 - q25;
    let (lo_fence, hi_fence) = (q25 - 1.5 * iqr, q75 + 1.5 * iqr);
    let inside: Vec<f64> = v.iter().copied().filter(|&x| x >= lo_fence && x <= hi_fence).collect();
    BoxStats {
        count: v.len(),
        median,
        q25,
        q75,
        whisker_lo: inside[0],
        whisker_hi: inside[inside.len() - 1],
        outliers: v.into_iter().filter(|&x| x < lo_fence || x > hi_fence).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_values() {
        let b = box_stats(&[5.0, 1.0, 4.0, 2.0, 3.0]).unwrap();
        assert_eq!((b.median, b.q25, b.q75), (3.0, 2.0, 4.0));
        assert_eq!((b.whisker_lo, b.whisker_hi), (1.0, 5.0));
        assert!(b.outliers.is_empty());
    }

    #[test]
    fn constant_vector_has_zero_width() {
        let b = box_stats(&[0.3; 8]).unwrap();
        assert_eq!((b.q25, b.median, b.q75), (0.3, 0.3, 0.3));
        assert!(b.outliers.is_empty());
    }

    #[test]
    fn far_point_is_an_outlier() {
        // q25 = 3.25, q75 = 7.75, upper fence 14.5.
        let mut v: Vec<f64> = (1..=9).map(f64::from).collect();
        v.push(100.0);
        let b = box_stats(&v).unwrap();
        assert_eq!((b.q25, b.q75), (3.25, 7.75));
        assert_eq!(b.outliers, vec![100.0]);
        assert_eq!(b.whisker_hi, 9.0);
    }

    #[test]
    fn too_few_values() {
        assert!(box_stats(&[1.0, 2.0, 3.0]).is_err());
    }
}
