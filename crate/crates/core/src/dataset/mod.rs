//! Datasets, the synthetic pressure-compensated-temperature benchmark,
//! normalization, train/test splits, metrics and file I/O.

mod io;
mod normalize;
mod pct;
mod report;
mod split;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use io::{ingest_csv, LoadReport};
pub use normalize::{denormalize, normalize, ColumnScale, NormMode, NormalizationState};
pub use pct::{generate_pct_dataset, pct, PctParams, Regime};
pub use report::{emit_report, parse_report, write_report, Report, ReportMeta, SensorRecord};
pub use split::{split_by_regime, split_random, Split};

/// Inputs `m` (one row per measurement) and the output `y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: DMatrix<f64>,
    pub output: DVector<f64>,
    pub input_names: Vec<String>,
    pub output_name: String,
    pub normalization: Option<NormalizationState>,
}

impl Dataset {
    pub fn new(
        inputs: DMatrix<f64>,
        output: DVector<f64>,
        input_names: Vec<String>,
        output_name: impl Into<String>,
    ) -> Result<Self> {
        let ds = Dataset {
            inputs,
            output,
            input_names,
            output_name: output_name.into(),
            normalization: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Dataset with generated column names `x1..xk` and output `y`.
    pub fn from_matrix(inputs: DMatrix<f64>, output: DVector<f64>) -> Result<Self> {
        let names = (1..=inputs.ncols()).map(|j| format!("x{j}")).collect();
        Dataset::new(inputs, output, names, "y")
    }

    pub fn validate(&self) -> Result<()> {
        let (n, np) = self.inputs.shape();
        if n == 0 {
            return invalid("dataset has no rows");
        }
        if np == 0 {
            return invalid("dataset has no input columns");
        }
        if self.output.len() != n {
            return Err(Error::Dimension { expected: n, got: self.output.len() });
        }
        if self.input_names.len() != np {
            return Err(Error::Dimension { expected: np, got: self.input_names.len() });
        }
        if self.inputs.iter().chain(self.output.iter()).any(|v| !v.is_finite()) {
            return invalid("dataset contains non-finite values");
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_inputs(&self) -> usize {
        self.inputs.ncols()
    }

    /// Copy of the given rows, in the given order.
    pub fn rows(&self, idx: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select_rows(idx.iter()),
            output: self.output.select_rows(idx.iter()),
            input_names: self.input_names.clone(),
            output_name: self.output_name.clone(),
            normalization: self.normalization.clone(),
        }
    }

    /// Copy restricted to the given input columns.
    pub fn columns(&self, cols: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select_columns(cols.iter()),
            output: self.output.clone(),
            input_names: cols.iter().map(|&j| self.input_names[j].clone()).collect(),
            output_name: self.output_name.clone(),
            normalization: self.normalization.clone(),
        }
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.input_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }
}

/// Root mean squared error.
pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::Dimension { expected: y.len(), got: y_hat.len() });
    }
    if y.is_empty() {
        return invalid("rmse of empty vectors");
    }
    let sse: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((sse / y.len() as f64).sqrt())
}
