//! Column standardization of an observation matrix.
//!
//! Every fitting entry point works on standardized data: each column centered
//! to mean zero and scaled to unit sample variance (n−1 denominator). The
//! original means and standard deviations are kept so results can be reported
//! on the raw scale.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// A standardized observation matrix, plus what it took to standardize it.
#[derive(Debug, Clone)]
pub struct DataMatrix {
    /// n×J matrix; each column has mean 0 and sample variance 1.
    pub values: DMatrix<f64>,
    pub column_names: Vec<String>,
    /// Raw column means, as subtracted.
    pub column_means: Vec<f64>,
    /// Raw sample standard deviations (n−1), as divided by.
    pub column_sds: Vec<f64>,
}

impl DataMatrix {
    /// Standardize `raw` column by column.
    ///
    /// # Errors
    ///
    /// - [`Error::TooFewRows`] if fewer than two rows are supplied.
    /// - [`Error::Dimension`] if the name list does not match the columns.
    /// - [`Error::ConstantColumn`] if a column has (numerically) zero spread:
    ///   sample SD below `1e-12 * max(1, |mean|)`.
    pub fn standardize(raw: &DMatrix<f64>, column_names: &[String]) -> Result<Self> {
        let (n, j) = (raw.nrows(), raw.ncols());
        if n < 2 {
            return Err(Error::TooFewRows {
                context: "standardization".into(),
                minimum: 2,
                found: n,
            });
        }
        if column_names.len() != j {
            return Err(Error::Dimension {
                context: "column names".into(),
                expected: format!("{j}"),
                found: format!("{}", column_names.len()),
            });
        }
        let mut values = raw.clone();
        let mut column_means = Vec::with_capacity(j);
        let mut column_sds = Vec::with_capacity(j);
        for c in 0..j {
            let col = raw.column(c);
            let mean = col.sum() / n as f64;
            let ss: f64 = col.iter().map(|v| (v - mean).powi(2)).sum();
            let sd = (ss / (n as f64 - 1.0)).sqrt();
            if sd <= 1e-12 * f64::max(1.0, mean.abs()) {
                return Err(Error::ConstantColumn {
                    name: column_names[c].clone(),
                });
            }
            for r in 0..n {
                values[(r, c)] = (raw[(r, c)] - mean) / sd;
            }
            column_means.push(mean);
            column_sds.push(sd);
        }
        Ok(Self {
            values,
            column_names: column_names.to_vec(),
            column_means,
            column_sds,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    /// Index of a column by name.
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.column_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::MissingColumn { name: name.into() })
    }

    /// Check the standardization invariants; used by tests and debug assertions.
    pub fn verify_standardized(&self) -> Result<()> {
        let n = self.n_rows() as f64;
        for c in 0..self.n_cols() {
            let col = self.values.column(c);
            let mean = col.sum() / n;
            let var: f64 = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            if mean.abs() > 1e-10 || (var - 1.0).abs() > 1e-8 {
                return Err(Error::InvalidConfig(format!(
                    "column {:?} is not standardized (mean {mean:.3e}, var {var:.6})",
                    self.column_names[c]
                )));
            }
        }
        Ok(())
    }
}
