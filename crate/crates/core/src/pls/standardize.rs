use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{ensure_finite, PlsError};
use crate::RealMatrix;

/// Per-column centering and scaling learned from training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    means: Vec<f64>,
    scales: Vec<f64>,
}

impl StandardizationParams {
    pub fn new(means: Vec<f64>, scales: Vec<f64>) -> Result<Self, PlsError> {
        if means.len() != scales.len() {
            return Err(PlsError::shape("standardization params", (1, means.len()), (1, scales.len())));
        }
        if let Some(j) = scales.iter().position(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(PlsError::ZeroVarianceColumn(j));
        }
        Ok(Self { means, scales })
    }

    /// Zero means, unit scales.
    pub fn identity(cols: usize) -> Self {
        Self { means: vec![0.0; cols], scales: vec![1.0; cols] }
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn apply(&self, x: &RealMatrix) -> Result<RealMatrix, PlsError> {
        self.check(x)?;
        ensure_finite(x)?;
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.means[j]) / self.scales[j]))
    }

    pub fn invert(&self, xs: &RealMatrix) -> Result<RealMatrix, PlsError> {
        self.check(xs)?;
        Ok(DMatrix::from_fn(xs.nrows(), xs.ncols(), |i, j| xs[(i, j)] * self.scales[j] + self.means[j]))
    }

    fn check(&self, x: &RealMatrix) -> Result<(), PlsError> {
        if x.ncols() != self.len() {
            return Err(PlsError::shape("standardization", (x.nrows(), self.len()), x.shape()));
        }
        Ok(())
    }
}

/// Centers every column and scales it to unit sample standard deviation
/// (denominator `m − 1`).
pub fn standardize(x: &RealMatrix) -> Result<(RealMatrix, StandardizationParams), PlsError> {
    let (m, n) = x.shape();
    if m < 2 {
        return Err(PlsError::TooFewRows { rows: m });
    }
    ensure_finite(x)?;
    let mut means = Vec::with_capacity(n);
    let mut scales = Vec::with_capacity(n);
    for (j, col) in x.column_iter().enumerate() {
        let mean = col.sum() / m as f64;
        let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
        let scale = (ss / (m - 1) as f64).sqrt();
        if scale == 0.0 || scale <= 8.0 * f64::EPSILON * mean.abs() {
            return Err(PlsError::ZeroVarianceColumn(j));
        }
        means.push(mean);
        scales.push(scale);
    }
    let params = StandardizationParams { means, scales };
    let xs = params.apply(x)?;
    Ok((xs, params))
}
