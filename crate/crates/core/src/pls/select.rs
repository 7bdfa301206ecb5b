use super::{max_components, r2_score, PlsError, PlsModel};
use crate::RealMatrix;

/// Validation scores closer than this to the best are considered tied.
pub const TIE_TOLERANCE: f64 = 1e-10;

/// Validation R² for `k = 1..=k_max`.
///
/// `k_max` is capped at the admissible component count. Scanning stops early,
/// without error, once the training cross-product is exhausted; at least one
/// component must be fittable.
pub fn validation_curve(
    x_tr: &RealMatrix,
    y_tr: &RealMatrix,
    x_val: &RealMatrix,
    y_val: &RealMatrix,
    k_max: usize,
) -> Result<Vec<(usize, f64)>, PlsError> {
    let cap = max_components(x_tr.nrows(), x_tr.ncols());
    if k_max == 0 {
        return Err(PlsError::InvalidComponentCount { requested: 0, max: cap });
    }
    let mut curve = Vec::new();
    for k in 1..=k_max.min(cap) {
        let model = match PlsModel::fit(x_tr, y_tr, k) {
            Ok(model) => model,
            Err(PlsError::RankDeficient { .. }) if k > 1 => break,
            Err(e) => return Err(e),
        };
        let y_hat = model.predict(x_val)?;
        curve.push((k, r2_score(y_val, &y_hat)?));
    }
    if curve.is_empty() {
        return Err(PlsError::InvalidComponentCount { requested: k_max, max: cap });
    }
    Ok(curve)
}

/// Smallest `k` whose score is within [`TIE_TOLERANCE`] of the best.
pub fn choose_k(curve: &[(usize, f64)]) -> Option<usize> {
    let best = curve.iter().map(|&(_, r2)| r2).fold(f64::NEG_INFINITY, f64::max);
    curve.iter().filter(|&&(_, r2)| r2 >= best - TIE_TOLERANCE).map(|&(k, _)| k).min()
}

/// Number of components maximizing validation R².
pub fn select_k(
    x_tr: &RealMatrix,
    y_tr: &RealMatrix,
    x_val: &RealMatrix,
    y_val: &RealMatrix,
    k_max: usize,
) -> Result<usize, PlsError> {
    let curve = validation_curve(x_tr, y_tr, x_val, y_val, k_max)?;
    Ok(choose_k(&curve).expect("validation curve is non-empty"))
}
