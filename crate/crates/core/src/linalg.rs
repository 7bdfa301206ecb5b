//! Small dense helpers shared across modules.

use nalgebra::DMatrix;

use crate::RealMatrix;

/// Sum of squared entries.
pub fn sum_of_squares(m: &RealMatrix) -> f64 {
    m.iter().map(|v| v * v).sum()
}

/// Largest absolute entry, `0.0` for an empty matrix.
pub fn max_abs(m: &RealMatrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Largest absolute entrywise difference between two equally shaped matrices.
pub fn max_abs_diff(a: &RealMatrix, b: &RealMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape(), "max_abs_diff: shape mismatch");
    a.iter().zip(b.iter()).fold(0.0_f64, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Mean of squared entrywise differences.
pub fn mean_squared_distance(a: &RealMatrix, b: &RealMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape(), "mean_squared_distance: shape mismatch");
    if a.is_empty() {
        return 0.0;
    }
    let ss: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
    ss / a.len() as f64
}

/// Returns the first `(row, col)` holding a NaN or infinity.
pub fn first_non_finite(m: &RealMatrix) -> Option<(usize, usize)> {
    for c in 0..m.ncols() {
        for r in 0..m.nrows() {
            if !m[(r, c)].is_finite() {
                return Some((r, c));
            }
        }
    }
    None
}

/// `‖QᵀQ − I‖_∞` measured entrywise.
pub fn orthogonality_error(q: &RealMatrix) -> f64 {
    let gram = q.transpose() * q;
    let eye = DMatrix::<f64>::identity(gram.nrows(), gram.ncols());
    max_abs_diff(&gram, &eye)
}

/// Horizontal concatenation of blocks sharing a row count.
pub fn hstack(blocks: &[RealMatrix]) -> RealMatrix {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut offset = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hstack: row count mismatch");
        out.columns_mut(offset, b.ncols()).copy_from(b);
        offset += b.ncols();
    }
    out
}

/// Splits the rows of `m` into consecutive blocks of the given heights.
pub fn vsplit(m: &RealMatrix, heights: &[usize]) -> Vec<RealMatrix> {
    let mut offset = 0;
    heights
        .iter()
        .map(|&h| {
            let block = m.rows(offset, h).into_owned();
            offset += h;
            block
        })
        .collect()
}

/// Selects the given rows, in order.
pub fn select_rows(m: &RealMatrix, rows: &[usize]) -> RealMatrix {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

/// Singular values in descending order.
pub fn singular_values(m: &RealMatrix) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}
