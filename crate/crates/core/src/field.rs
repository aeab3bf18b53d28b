use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symbolization::TimeSeries;

/// `N` spatially ordered cells observed over `T` timesteps.
///
/// Cells are addressed zero-based in code; labels carry the one-based
/// `S1..SN` names used in files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatioTemporalField {
    labels: Vec<String>,
    /// `values[cell][t]`
    values: Vec<Vec<f64>>,
    /// Time index of the first column.
    pub t0: i64,
    /// Physical duration of one timestep, if known.
    pub sample_period: Option<f64>,
}

impl SpatioTemporalField {
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        let labels = (1..=values.len()).map(|n| format!("S{n}")).collect();
        Self::with_labels(values, labels, 0)
    }

    pub fn with_labels(values: Vec<Vec<f64>>, labels: Vec<String>, t0: i64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InsufficientData("field has no cells".into()));
        }
        if labels.len() != values.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} cells",
                labels.len(),
                values.len()
            )));
        }
        let t = values[0].len();
        if t == 0 {
            return Err(Error::InsufficientData("field has no timesteps".into()));
        }
        for (cell, row) in values.iter().enumerate() {
            if row.len() != t {
                return Err(Error::ShapeMismatch(format!(
                    "cell {} has {} timesteps, expected {t}",
                    labels[cell],
                    row.len()
                )));
            }
            if let Some((index, &value)) = row.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                return Err(Error::InvalidSample { index, value });
            }
        }
        Ok(Self {
            labels,
            values,
            t0,
            sample_period: None,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.values.len()
    }

    pub fn n_steps(&self) -> usize {
        self.values[0].len()
    }

    pub fn cell(&self, n: usize) -> &[f64] {
        &self.values[n]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Copy of cell `n` as a standalone series.
    pub fn series(&self, n: usize) -> TimeSeries {
        TimeSeries::new(self.values[n].clone(), self.labels[n].clone(), self.t0)
            .expect("field rows are validated on construction")
    }

    /// Field with cell `n` replaced by `samples` (same length).
    pub fn with_cell(&self, n: usize, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != self.n_steps() {
            return Err(Error::ShapeMismatch(format!(
                "replacement has {} timesteps, expected {}",
                samples.len(),
                self.n_steps()
            )));
        }
        let mut out = self.clone();
        out.values[n] = samples;
        Ok(out)
    }

    /// Drops the first `n` timesteps.
    pub fn skip_steps(&self, n: usize) -> Result<Self> {
        if n >= self.n_steps() {
            return Err(Error::InsufficientData(format!(
                "cannot discard {n} of {} timesteps",
                self.n_steps()
            )));
        }
        Ok(Self {
            labels: self.labels.clone(),
            values: self.values.iter().map(|r| r[n..].to_vec()).collect(),
            t0: self.t0 + n as i64,
            sample_period: self.sample_period,
        })
    }
}
