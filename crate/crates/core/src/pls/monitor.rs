use super::{PlsError, PlsModel};
use crate::RealMatrix;

/// Per-sample process-monitoring statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitoringStats {
    /// Hotelling T²: `Σ_j t_j² / λ_j`, `λ_j` the training variance of score j.
    pub t2: Vec<f64>,
    /// Squared prediction error: row sum of squares of `X_std − T_new Pᵀ`.
    pub spe: Vec<f64>,
}

pub(super) fn monitoring_stats(model: &PlsModel, x_new: &RealMatrix) -> Result<MonitoringStats, PlsError> {
    let xs = model.x_std.apply(x_new)?;
    let c = &model.components;
    let scores = &xs * &c.rotations;
    let m_train = c.x_scores.nrows();
    let variances: Vec<f64> =
        c.x_scores.column_iter().map(|t| t.norm_squared() / (m_train.max(2) - 1) as f64).collect();

    let t2 = scores.row_iter().map(|row| row.iter().zip(&variances).map(|(t, lambda)| t * t / lambda).sum()).collect();
    let residual = &xs - &scores * c.x_loadings.transpose();
    let spe = residual.row_iter().map(|row| row.norm_squared()).collect();
    Ok(MonitoringStats { t2, spe })
}
