//! The data panel: a `d×N` matrix of observations with preprocessing state.
//!
//! Observations (e.g. trading days) are rows, series (e.g. equities) are
//! columns. All model operations consume panels in this orientation.

use crate::stats::compensated_sum;
use crate::{Error, Result};
use ndarray::{Array2, ArrayView1};

/// Preprocessing applied to a panel's columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preprocessing {
    /// As loaded; no guarantees on column means.
    Raw,
    /// Every column mean is zero.
    Centered,
    /// Every column has mean zero and unit sample standard deviation.
    Standardized,
}

impl Preprocessing {
    pub fn name(self) -> &'static str {
        match self {
            Preprocessing::Raw => "raw",
            Preprocessing::Centered => "centered",
            Preprocessing::Standardized => "standardized",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "raw" => Some(Preprocessing::Raw),
            "centered" => Some(Preprocessing::Centered),
            "standardized" => Some(Preprocessing::Standardized),
            _ => None,
        }
    }
}

impl std::fmt::Display for Preprocessing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A `d×N` panel of observations with `d ≥ 2` rows and `N ≥ 1` columns.
///
/// Panels are immutable; preprocessing steps return new panels.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPanel {
    values: Array2<f64>,
    preprocessing: Preprocessing,
}

impl DataPanel {
    /// Wrap a raw matrix. Rejects panels with fewer than two observations
    /// (sample covariance divides by `d−1`), empty panels, and non-finite
    /// entries.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.nrows() < 2 {
            return Err(Error::DegenerateSample {
                required: 2,
                actual: values.nrows(),
            });
        }
        if values.ncols() == 0 {
            return Err(Error::EmptyVector);
        }
        if let Some((idx, _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite value at row {}, column {}",
                idx.0, idx.1
            )));
        }
        Ok(Self {
            values,
            preprocessing: Preprocessing::Raw,
        })
    }

    /// Internal constructor for panels whose preprocessing state is known.
    pub(crate) fn from_parts(values: Array2<f64>, preprocessing: Preprocessing) -> Self {
        Self {
            values,
            preprocessing,
        }
    }

    /// Wrap values carrying a preprocessing claim (e.g. read back from a
    /// panel file), verifying the claim instead of re-deriving the values so
    /// round trips stay bit-exact. Centered panels must have zero column
    /// means within `1e-9` relative; standardized panels additionally unit
    /// sample standard deviation within `1e-6`.
    pub fn with_preprocessing(
        values: Array2<f64>,
        preprocessing: Preprocessing,
    ) -> Result<Self> {
        let panel = DataPanel::new(values)?;
        match preprocessing {
            Preprocessing::Raw => return Ok(panel),
            Preprocessing::Centered | Preprocessing::Standardized => {
                if !panel.is_centered(1e-9) {
                    return Err(Error::InvalidParameter(
                        "panel claims centered but column means are not zero".into(),
                    ));
                }
            }
        }
        if preprocessing == Preprocessing::Standardized {
            for (b, col) in panel.values.columns().into_iter().enumerate() {
                let ss: f64 = compensated_sum(col.iter().map(|&v| v * v));
                let std = (ss / (panel.d() - 1) as f64).sqrt();
                if (std - 1.0).abs() > 1e-6 {
                    return Err(Error::InvalidParameter(format!(
                        "panel claims standardized but column {b} has std {std}"
                    )));
                }
            }
        }
        Ok(DataPanel::from_parts(panel.values, preprocessing))
    }

    /// Number of observations (rows).
    pub fn d(&self) -> usize {
        self.values.nrows()
    }

    /// Number of series (columns).
    pub fn n_series(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn preprocessing(&self) -> Preprocessing {
        self.preprocessing
    }

    pub fn column(&self, b: usize) -> ArrayView1<'_, f64> {
        self.values.column(b)
    }

    /// Subtract each column's mean. A second correction pass removes the
    /// rounding residual so column means land at zero to within `1e-12` of the
    /// column's max-abs value.
    pub fn center(&self) -> DataPanel {
        let mut values = self.values.clone();
        center_columns(&mut values);
        DataPanel::from_parts(values, Preprocessing::Centered)
    }

    /// Center and scale every column to unit sample standard deviation.
    ///
    /// Fails atomically with the offending column index if any column has zero
    /// variance; correlation is undefined for such series downstream.
    pub fn standardize(&self) -> Result<DataPanel> {
        let d = self.d();
        let mut values = self.values.clone();
        center_columns(&mut values);
        let mut scales = Vec::with_capacity(self.n_series());
        for (b, col) in values.columns().into_iter().enumerate() {
            let ss: f64 = compensated_sum(col.iter().map(|&v| v * v));
            let var = ss / (d - 1) as f64;
            if var <= 0.0 {
                return Err(Error::ZeroVarianceColumn { column: b });
            }
            scales.push(1.0 / var.sqrt());
        }
        for (b, &s) in scales.iter().enumerate() {
            values.column_mut(b).mapv_inplace(|v| v * s);
        }
        Ok(DataPanel::from_parts(values, Preprocessing::Standardized))
    }

    /// Whether column means are numerically zero (within `tol` relative to the
    /// column's max-abs value).
    pub fn is_centered(&self, tol: f64) -> bool {
        self.values.columns().into_iter().all(|col| {
            let max_abs = col.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            let mean = compensated_sum(col.iter().copied()) / col.len() as f64;
            mean.abs() <= tol * max_abs.max(f64::MIN_POSITIVE)
        })
    }
}

/// Two-pass column centering with one residual-correction pass.
pub(crate) fn center_columns(values: &mut Array2<f64>) {
    let d = values.nrows();
    for mut col in values.columns_mut() {
        let mean = compensated_sum(col.iter().copied()) / d as f64;
        col.mapv_inplace(|v| v - mean);
        let residual = compensated_sum(col.iter().copied()) / d as f64;
        if residual != 0.0 {
            col.mapv_inplace(|v| v - residual);
        }
    }
}
