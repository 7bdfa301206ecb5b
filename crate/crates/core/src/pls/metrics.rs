use super::{ensure_finite, PlsError};
use crate::linalg::sum_of_squares;
use crate::RealMatrix;

/// Coefficient of determination averaged uniformly over the columns of `y`,
/// each column using its own mean as baseline.
///
/// A constant reference column scores 1 when reproduced exactly and 0
/// otherwise.
pub fn r2_score(y: &RealMatrix, y_hat: &RealMatrix) -> Result<f64, PlsError> {
    if y.shape() != y_hat.shape() {
        return Err(PlsError::shape("r2_score", y.shape(), y_hat.shape()));
    }
    ensure_finite(y)?;
    ensure_finite(y_hat)?;
    let (m, l) = y.shape();
    if m == 0 || l == 0 {
        return Err(PlsError::TooFewRows { rows: m });
    }
    let mut total = 0.0;
    for (col, col_hat) in y.column_iter().zip(y_hat.column_iter()) {
        let mean = col.sum() / m as f64;
        let ss_tot: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
        let ss_res: f64 = col.iter().zip(col_hat.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        total += if ss_tot > 0.0 {
            1.0 - ss_res / ss_tot
        } else if ss_res == 0.0 {
            1.0
        } else {
            0.0
        };
    }
    Ok(total / l as f64)
}

/// Share of the total variance of a standardized `m × n` design explained
/// by the loadings block `p_block`: `SS(P_i) / ((m − 1) n)`.
pub fn explained_variance_x(p_block: &RealMatrix, m: usize, n: usize) -> Result<f64, PlsError> {
    loading_share(p_block, m, n, "explained_variance_x")
}

/// `SS(Q) / ((m − 1) l)`.
pub fn explained_variance_y(q: &RealMatrix, m: usize, l: usize) -> Result<f64, PlsError> {
    loading_share(q, m, l, "explained_variance_y")
}

fn loading_share(block: &RealMatrix, m: usize, cols: usize, context: &'static str) -> Result<f64, PlsError> {
    if m < 2 {
        return Err(PlsError::TooFewRows { rows: m });
    }
    if cols == 0 || block.nrows() > cols {
        return Err(PlsError::shape(context, (cols, block.ncols()), block.shape()));
    }
    Ok(sum_of_squares(block) / ((m - 1) * cols) as f64)
}

/// `1 − SS(Y − Ŷ_i) / (m l)`: how much of `y` the block prediction `y_hat`
/// accounts for. The denominator is `m l`, not the `(m − 1) l` sum of
/// squares of a standardized `y`, so an all-zero prediction scores
/// `1 − (m − 1)/m`.
pub fn r2_block_y(y: &RealMatrix, y_hat: &RealMatrix, m: usize, l: usize) -> Result<f64, PlsError> {
    if y.shape() != y_hat.shape() || y.shape() != (m, l) {
        return Err(PlsError::shape("r2_block_y", (m, l), y_hat.shape()));
    }
    if m == 0 || l == 0 {
        return Err(PlsError::TooFewRows { rows: m });
    }
    Ok(1.0 - sum_of_squares(&(y - y_hat)) / (m * l) as f64)
}
