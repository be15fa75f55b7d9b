use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    /// Affine map of `[min, max]` onto `[0, 1]`.
    UnitInterval,
    /// Zero mean, unit (population) standard deviation.
    Zscore,
}

/// Scaled value is `(v - offset) / scale`. For `UnitInterval` the offset is
/// the column minimum and the scale its range; for `Zscore` they are the
/// mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub name: String,
    pub offset: f64,
    pub scale: f64,
}

impl ColumnScale {
    pub fn forward(&self, v: f64) -> f64 {
        (v - self.offset) / self.scale
    }

    pub fn inverse(&self, v: f64) -> f64 {
        v * self.scale + self.offset
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationState {
    pub mode: NormMode,
    pub inputs: Vec<ColumnScale>,
    pub output: ColumnScale,
}

fn fit_column(name: &str, values: impl Iterator<Item = f64> + Clone, mode: NormMode) -> Result<ColumnScale> {
    let (offset, scale) = match mode {
        NormMode::UnitInterval => {
            let lo = values.clone().fold(f64::INFINITY, f64::min);
            let hi = values.fold(f64::NEG_INFINITY, f64::max);
            (lo, hi - lo)
        }
        NormMode::Zscore => {
            let n = values.clone().count() as f64;
            let mean = values.clone().sum::<f64>() / n;
            let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            (mean, var.sqrt())
        }
    };
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::ConstantColumn(name.to_string()));
    }
    Ok(ColumnScale { name: name.to_string(), offset, scale })
}

impl NormalizationState {
    /// Fits per-column parameters on all rows of `ds`.
    pub fn fit(ds: &Dataset, mode: NormMode) -> Result<Self> {
        let rows: Vec<usize> = (0..ds.len()).collect();
        Self::fit_rows(ds, &rows, mode)
    }

    /// Fits on a subset of rows, typically the training set.
    pub fn fit_rows(ds: &Dataset, rows: &[usize], mode: NormMode) -> Result<Self> {
        if ds.normalization.is_some() {
            return invalid("dataset is already normalized");
        }
        if rows.is_empty() {
            return invalid("cannot fit normalization on zero rows");
        }
        let inputs = (0..ds.num_inputs())
            .map(|j| fit_column(&ds.input_names[j], rows.iter().map(|&i| ds.inputs[(i, j)]), mode))
            .collect::<Result<Vec<_>>>()?;
        let output = fit_column(&ds.output_name, rows.iter().map(|&i| ds.output[i]), mode)?;
        Ok(NormalizationState { mode, inputs, output })
    }

    pub fn apply(&self, ds: &Dataset) -> Result<Dataset> {
        if ds.normalization.is_some() {
            return invalid("dataset is already normalized");
        }
        if ds.num_inputs() != self.inputs.len() {
            return Err(Error::Dimension { expected: self.inputs.len(), got: ds.num_inputs() });
        }
        let mut out = ds.clone();
        for (j, c) in self.inputs.iter().enumerate() {
            out.inputs.column_mut(j).apply(|v| *v = c.forward(*v));
        }
        out.output.apply(|v| *v = self.output.forward(*v));
        out.normalization = Some(self.clone());
        Ok(out)
    }

    pub fn column(&self, name: &str) -> Result<&ColumnScale> {
        if self.output.name == name {
            return Ok(&self.output);
        }
        self.inputs
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    /// Maps scaled values of `column` back to physical units.
    pub fn denormalize(&self, v: &[f64], column: &str) -> Result<Vec<f64>> {
        let c = self.column(column)?;
        Ok(v.iter().map(|&x| c.inverse(x)).collect())
    }

    pub fn normalize_values(&self, v: &[f64], column: &str) -> Result<Vec<f64>> {
        let c = self.column(column)?;
        Ok(v.iter().map(|&x| c.forward(x)).collect())
    }
}

/// Fits a normalization on all of `ds` and applies it.
pub fn normalize(ds: &Dataset, mode: NormMode) -> Result<(Dataset, NormalizationState)> {
    let state = NormalizationState::fit(ds, mode)?;
    Ok((state.apply(ds)?, state))
}

/// Inverse map of a scaled vector for one column.
pub fn denormalize(v: &[f64], state: &NormalizationState, column: &str) -> Result<Vec<f64>> {
    state.denormalize(v, column)
}
