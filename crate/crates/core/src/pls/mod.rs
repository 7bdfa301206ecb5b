//! SVD-based PLS2 regression.
//!
//! [`fit_components`] is the raw decomposition: it works on whatever matrices
//! it is given and is what the computation service provider runs on masked
//! data. [`PlsModel`] wraps it with column standardization for ordinary
//! centralized use.
//!
//! Each iteration takes the dominant singular pair `(w, v)` of the
//! cross-product `S = EᵀF`, forms the score `t = Ew` normalized to unit
//! length, regresses `E` and `F` on `t` to obtain the loadings and deflates
//! both blocks. Unit-norm scores make `TᵀT = I`, so the loading sums of
//! squares are directly the explained variances.

mod metrics;
mod monitor;
mod select;
mod standardize;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::linalg;
use crate::RealMatrix;

pub use metrics::{explained_variance_x, explained_variance_y, r2_block_y, r2_score};
pub use monitor::MonitoringStats;
pub use select::{choose_k, select_k, validation_curve, TIE_TOLERANCE};
pub use standardize::{standardize, StandardizationParams};

/// A cross-product whose leading singular value falls below this fraction of
/// the first iteration's is treated as exhausted.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Largest admissible condition number of `PᵀW`.
pub const MAX_ROTATION_CONDITION: f64 = 1e12;

const POLISH_STEPS: usize = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlsError {
    #[error("at least two rows are required, got {rows}")]
    TooFewRows { rows: usize },
    #[error("column {0} has zero sample variance")]
    ZeroVarianceColumn(usize),
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch { context: &'static str, expected: String, found: String },
    #[error("requested {requested} components, admissible range is 1..={max}")]
    InvalidComponentCount { requested: usize, max: usize },
    #[error("cross-product exhausted after {extracted} components")]
    RankDeficient { extracted: usize },
    #[error("PᵀW is singular (condition estimate {condition:e})")]
    SingularRotation { condition: f64 },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
}

impl PlsError {
    pub(crate) fn shape(context: &'static str, expected: (usize, usize), found: (usize, usize)) -> Self {
        Self::DimensionMismatch {
            context,
            expected: format!("{}x{}", expected.0, expected.1),
            found: format!("{}x{}", found.0, found.1),
        }
    }
}

pub(crate) fn ensure_finite(m: &RealMatrix) -> Result<(), PlsError> {
    match linalg::first_non_finite(m) {
        Some((row, col)) => Err(PlsError::NonFinite { row, col }),
        None => Ok(()),
    }
}

/// Largest admissible component count for an `m × n` design.
pub fn max_components(m: usize, n: usize) -> usize {
    m.saturating_sub(1).min(n)
}

/// The fitted decomposition `X = T Pᵀ + Θ`, `Y = U Qᵀ + Φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlsComponents {
    /// X-weights `W` (n×k).
    pub weights: RealMatrix,
    /// Unit-norm X-scores `T` (m×k).
    pub x_scores: RealMatrix,
    /// X-loadings `P` (n×k).
    pub x_loadings: RealMatrix,
    /// Y-loadings `Q` (l×k).
    pub y_loadings: RealMatrix,
    /// Y-scores `U` (m×k), not normalized.
    pub y_scores: RealMatrix,
    /// Rotations `R = W (PᵀW)⁻¹` (n×k).
    pub rotations: RealMatrix,
    /// Coefficients `B = R Qᵀ` (n×l).
    pub coefficients: RealMatrix,
    /// Final deflated X, `Θ` (m×n).
    pub x_residuals: RealMatrix,
    /// Final deflated Y, `Φ` (m×l).
    pub y_residuals: RealMatrix,
}

impl PlsComponents {
    pub fn n_components(&self) -> usize {
        self.weights.ncols()
    }
}

struct FitWorkspace {
    e: RealMatrix,
    f: RealMatrix,
}

impl FitWorkspace {
    /// Dominant singular pair of `EᵀF`, sign-fixed so the largest-magnitude
    /// entry of `w` is positive.
    fn leading_pair(&self) -> (f64, nalgebra::DVector<f64>, nalgebra::DVector<f64>) {
        let s = self.e.transpose() * &self.f;
        let svd = s.clone().svd(true, true);
        let u = svd.u.expect("left singular vectors requested");
        let v_t = svd.v_t.expect("right singular vectors requested");
        let (idx, sigma) = svd
            .singular_values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, s)| if s > best.1 { (i, s) } else { best });
        let mut w = u.column(idx).into_owned();
        let mut v = v_t.row(idx).transpose();
        // The small-matrix SVD paths can return inaccurate vectors when S is
        // nearly rank one. A few power steps pull w back into range(S).
        for _ in 0..POLISH_STEPS {
            let sv = &s * &v;
            let norm = sv.norm();
            if !(norm > 0.0) {
                break;
            }
            w = sv / norm;
            let stw = s.tr_mul(&w);
            let norm = stw.norm();
            if !(norm > 0.0) {
                break;
            }
            v = stw / norm;
        }
        let pivot = w.iamax();
        if w[pivot] < 0.0 {
            w.neg_mut();
            v.neg_mut();
        }
        (sigma, w, v)
    }
}

/// Runs the decomposition on `x` (m×n) and `y` (m×l) without any
/// preprocessing.
pub fn fit_components(x: &RealMatrix, y: &RealMatrix, k: usize) -> Result<PlsComponents, PlsError> {
    let (m, n) = x.shape();
    let l = y.ncols();
    if y.nrows() != m {
        return Err(PlsError::shape("fit: Y rows", (m, l), y.shape()));
    }
    if l == 0 || n == 0 {
        return Err(PlsError::shape("fit: empty block", (m, n.max(1)), (m, n.min(l))));
    }
    ensure_finite(x)?;
    ensure_finite(y)?;
    let cap = max_components(m, n);
    if k == 0 || k > cap {
        return Err(PlsError::InvalidComponentCount { requested: k, max: cap });
    }

    let mut ws = FitWorkspace { e: x.clone(), f: y.clone() };
    let mut weights = DMatrix::zeros(n, k);
    let mut x_scores = DMatrix::zeros(m, k);
    let mut x_loadings = DMatrix::zeros(n, k);
    let mut y_loadings = DMatrix::zeros(l, k);
    let mut y_scores = DMatrix::zeros(m, k);
    let mut first_sigma = 0.0;

    for j in 0..k {
        let (sigma, w, v) = ws.leading_pair();
        if j == 0 {
            first_sigma = sigma;
        }
        if !(sigma > RANK_TOLERANCE * first_sigma) || sigma == 0.0 {
            return Err(PlsError::RankDeficient { extracted: j });
        }
        let mut t = &ws.e * &w;
        let norm = t.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(PlsError::RankDeficient { extracted: j });
        }
        t /= norm;
        let u = &ws.f * &v;
        let p = ws.e.transpose() * &t;
        let q = ws.f.transpose() * &t;
        ws.e -= &t * p.transpose();
        ws.f -= &t * q.transpose();

        weights.set_column(j, &w);
        x_scores.set_column(j, &t);
        x_loadings.set_column(j, &p);
        y_loadings.set_column(j, &q);
        y_scores.set_column(j, &u);
    }

    let rotations = rotation_matrix(&weights, &x_loadings)?;
    let coefficients = &rotations * y_loadings.transpose();
    Ok(PlsComponents {
        weights,
        x_scores,
        x_loadings,
        y_loadings,
        y_scores,
        rotations,
        coefficients,
        x_residuals: ws.e,
        y_residuals: ws.f,
    })
}

/// `R = W (PᵀW)⁻¹`, solved with partial pivoting.
pub fn rotation_matrix(weights: &RealMatrix, loadings: &RealMatrix) -> Result<RealMatrix, PlsError> {
    let ptw = loadings.transpose() * weights;
    let sv = ptw.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_ROTATION_CONDITION) {
        return Err(PlsError::SingularRotation { condition });
    }
    // R (PᵀW) = W  ⇔  (PᵀW)ᵀ Rᵀ = Wᵀ
    let rt = ptw.transpose().lu().solve(&weights.transpose()).ok_or(PlsError::SingularRotation { condition })?;
    Ok(rt.transpose())
}

/// A PLS model fitted on standardized data, with the parameters needed to
/// map new raw samples into the model and predictions back to raw units.
#[derive(Debug, Clone, PartialEq)]
pub struct PlsModel {
    components: PlsComponents,
    x_std: StandardizationParams,
    y_std: StandardizationParams,
}

impl PlsModel {
    /// Standardizes `x` and `y` (sample std, denominator m−1) and fits `k`
    /// components.
    pub fn fit(x: &RealMatrix, y: &RealMatrix, k: usize) -> Result<Self, PlsError> {
        if y.nrows() != x.nrows() {
            return Err(PlsError::shape("fit: Y rows", (x.nrows(), y.ncols()), y.shape()));
        }
        let (xs, x_std) = standardize(x)?;
        let (ys, y_std) = standardize(y)?;
        let components = fit_components(&xs, &ys, k)?;
        Ok(Self { components, x_std, y_std })
    }

    /// Assembles a model from already-fitted parts.
    pub fn from_parts(
        components: PlsComponents,
        x_std: StandardizationParams,
        y_std: StandardizationParams,
    ) -> Result<Self, PlsError> {
        let n = components.weights.nrows();
        let l = components.y_loadings.nrows();
        if x_std.len() != n {
            return Err(PlsError::shape("model: x params", (1, n), (1, x_std.len())));
        }
        if y_std.len() != l {
            return Err(PlsError::shape("model: y params", (1, l), (1, y_std.len())));
        }
        Ok(Self { components, x_std, y_std })
    }

    pub fn components(&self) -> &PlsComponents {
        &self.components
    }

    pub fn x_std(&self) -> &StandardizationParams {
        &self.x_std
    }

    pub fn y_std(&self) -> &StandardizationParams {
        &self.y_std
    }

    pub fn n_components(&self) -> usize {
        self.components.n_components()
    }

    pub fn n_features(&self) -> usize {
        self.components.weights.nrows()
    }

    pub fn n_targets(&self) -> usize {
        self.components.y_loadings.nrows()
    }

    /// Coefficients on the standardized scale.
    pub fn coefficients(&self) -> &RealMatrix {
        &self.components.coefficients
    }

    /// `Ŷ = X_std B`, returned in the original units of Y.
    pub fn predict(&self, x_new: &RealMatrix) -> Result<RealMatrix, PlsError> {
        let xs = self.x_std.apply(x_new)?;
        let ys = xs * &self.components.coefficients;
        self.y_std.invert(&ys)
    }

    /// `T_new = X_std R`.
    pub fn transform(&self, x_new: &RealMatrix) -> Result<RealMatrix, PlsError> {
        let xs = self.x_std.apply(x_new)?;
        Ok(xs * &self.components.rotations)
    }

    /// Hotelling T² and squared prediction error per row of `x_new`.
    pub fn monitoring_stats(&self, x_new: &RealMatrix) -> Result<MonitoringStats, PlsError> {
        monitor::monitoring_stats(self, x_new)
    }
}
