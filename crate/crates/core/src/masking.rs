//! Seeded key material: random orthogonal matrices for the data masks and
//! well-conditioned random matrices for the one-time recovery and inference
//! masks.
//!
//! Every generator is a pure function of its seed.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::rng;
use crate::RealMatrix;

/// Invertible masks with a larger condition estimate are redrawn.
pub const MAX_MASK_CONDITION: f64 = 1e6;
/// Redraw budget for [`generate_invertible`].
pub const MAX_MASK_ATTEMPTS: u32 = 32;
pub const DEFAULT_BLOCK_SIZE: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaskingError {
    #[error("invalid mask dimension {0}")]
    InvalidDim(usize),
    #[error("no {dim}x{dim} mask with condition <= {MAX_MASK_CONDITION:e} after {attempts} draws")]
    MaskGenerationFailed { dim: usize, attempts: u32 },
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch { context: &'static str, expected: String, found: String },
}

fn mismatch(context: &'static str, expected: (usize, usize), found: (usize, usize)) -> MaskingError {
    MaskingError::DimensionMismatch {
        context,
        expected: format!("{}x{}", expected.0, expected.1),
        found: format!("{}x{}", found.0, found.1),
    }
}

/// How an orthogonal key is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum OrthogonalMethod {
    /// QR of a full Gaussian matrix with the column signs fixed by the
    /// diagonal of R (Haar distributed).
    #[default]
    DenseQr,
    /// Block-diagonal composition of small dense-QR blocks followed by a
    /// seeded row permutation. Much cheaper for large dimensions.
    BlockBased { block_size: usize },
}

impl OrthogonalMethod {
    pub fn block_based() -> Self {
        Self::BlockBased { block_size: DEFAULT_BLOCK_SIZE }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalMatrix {
    matrix: RealMatrix,
    method: OrthogonalMethod,
    seed: u64,
}

impl OrthogonalMatrix {
    pub fn matrix(&self) -> &RealMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn method(&self) -> OrthogonalMethod {
        self.method
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn transpose(&self) -> RealMatrix {
        self.matrix.transpose()
    }

    pub fn into_matrix(self) -> RealMatrix {
        self.matrix
    }
}

fn gaussian(rows: usize, cols: usize, rng: &mut impl Rng) -> RealMatrix {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn haar_orthogonal(dim: usize, rng: &mut impl Rng) -> RealMatrix {
    let qr = gaussian(dim, dim, rng).qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Draws a `dim × dim` orthogonal matrix.
pub fn generate_orthogonal(dim: usize, seed: u64, method: OrthogonalMethod) -> Result<OrthogonalMatrix, MaskingError> {
    if dim == 0 {
        return Err(MaskingError::InvalidDim(dim));
    }
    let matrix = match method {
        OrthogonalMethod::DenseQr => haar_orthogonal(dim, &mut rng::from_seed(seed)),
        OrthogonalMethod::BlockBased { block_size } => {
            if block_size == 0 {
                return Err(MaskingError::InvalidDim(0));
            }
            let mut diag = DMatrix::zeros(dim, dim);
            let mut start = 0;
            let mut index = 0;
            while start < dim {
                let size = block_size.min(dim - start);
                let mut block_rng = rng::stream(seed, &format!("orthogonal/block/{index}"));
                let block = haar_orthogonal(size, &mut block_rng);
                diag.view_mut((start, start), (size, size)).copy_from(&block);
                start += size;
                index += 1;
            }
            let mut perm: Vec<usize> = (0..dim).collect();
            perm.shuffle(&mut rng::stream(seed, "orthogonal/permutation"));
            linalg::select_rows(&diag, &perm)
        }
    };
    Ok(OrthogonalMatrix { matrix, method, seed })
}

/// Key material issued by the trusted authority for one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskKeySet {
    a: OrthogonalMatrix,
    h: OrthogonalMatrix,
    h_splits: Vec<RealMatrix>,
    g: OrthogonalMatrix,
    widths: Vec<usize>,
}

impl MaskKeySet {
    /// Shared sample-space key `A` (m×m).
    pub fn a(&self) -> &OrthogonalMatrix {
        &self.a
    }

    /// Full feature-space key `H` (n×n). Only the trusted authority holds it.
    pub fn h(&self) -> &OrthogonalMatrix {
        &self.h
    }

    /// Column blocks `H_iᵀ` (n×n_i) of `Hᵀ`, one per feature contributor.
    pub fn h_splits(&self) -> &[RealMatrix] {
        &self.h_splits
    }

    /// Target-space key `G` (l×l).
    pub fn g(&self) -> &OrthogonalMatrix {
        &self.g
    }

    pub fn block_widths(&self) -> &[usize] {
        &self.widths
    }

    /// `Hᵀ` rebuilt from its splits.
    pub fn reassembled_h_t(&self) -> RealMatrix {
        linalg::hstack(&self.h_splits)
    }
}

/// Generates `A`, `H` (split by `block_widths`) and `G` with dense QR.
pub fn generate_keys(m: usize, block_widths: &[usize], l: usize, seed: u64) -> Result<MaskKeySet, MaskingError> {
    generate_keys_with(m, block_widths, l, seed, OrthogonalMethod::DenseQr)
}

pub fn generate_keys_with(
    m: usize,
    block_widths: &[usize],
    l: usize,
    seed: u64,
    method: OrthogonalMethod,
) -> Result<MaskKeySet, MaskingError> {
    if block_widths.is_empty() {
        return Err(MaskingError::InvalidDim(0));
    }
    if let Some(&w) = block_widths.iter().find(|&&w| w == 0) {
        return Err(MaskingError::InvalidDim(w));
    }
    let n: usize = block_widths.iter().sum();
    let a = generate_orthogonal(m, rng::derive_seed(seed, "keys/A"), method)?;
    let h = generate_orthogonal(n, rng::derive_seed(seed, "keys/H"), method)?;
    let g = generate_orthogonal(l, rng::derive_seed(seed, "keys/G"), method)?;
    let h_t = h.transpose();
    let mut offset = 0;
    let h_splits = block_widths
        .iter()
        .map(|&w| {
            let split = h_t.columns(offset, w).into_owned();
            offset += w;
            split
        })
        .collect();
    Ok(MaskKeySet { a, h, h_splits, g, widths: block_widths.to_vec() })
}

/// `X′_i = A X_i H_i`, where `H_i` is the transpose of the issued split
/// `H_iᵀ` (n×n_i). The result is m×n.
pub fn mask_features(x_i: &RealMatrix, a: &RealMatrix, h_i_t: &RealMatrix) -> Result<RealMatrix, MaskingError> {
    let (m, n_i) = x_i.shape();
    if a.shape() != (m, m) {
        return Err(mismatch("mask_features: A", (m, m), a.shape()));
    }
    if h_i_t.ncols() != n_i {
        return Err(mismatch("mask_features: H_i^T", (h_i_t.nrows(), n_i), h_i_t.shape()));
    }
    Ok(a * x_i * h_i_t.transpose())
}

/// `Y′ = A Y G`.
pub fn mask_targets(y: &RealMatrix, a: &RealMatrix, g: &RealMatrix) -> Result<RealMatrix, MaskingError> {
    let (m, l) = y.shape();
    if a.shape() != (m, m) {
        return Err(mismatch("mask_targets: A", (m, m), a.shape()));
    }
    if g.shape() != (l, l) {
        return Err(mismatch("mask_targets: G", (l, l), g.shape()));
    }
    Ok(a * y * g)
}

/// A random square matrix together with its inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertibleMask {
    matrix: RealMatrix,
    inverse: RealMatrix,
    condition: f64,
    seed: u64,
    attempts: u32,
}

impl InvertibleMask {
    pub fn matrix(&self) -> &RealMatrix {
        &self.matrix
    }

    pub fn inverse(&self) -> &RealMatrix {
        &self.inverse
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of draws it took to pass the conditioning check.
    pub fn attempts(&self) -> u32 {
        self.attempts
    }

    /// An identity mask, for tests that need to see through the masking.
    pub fn identity(dim: usize) -> Self {
        let eye = DMatrix::identity(dim, dim);
        Self { matrix: eye.clone(), inverse: eye, condition: 1.0, seed: 0, attempts: 0 }
    }
}

/// Gaussian `dim × dim` matrix, redrawn until its condition number is at
/// most [`MAX_MASK_CONDITION`].
pub fn generate_invertible(dim: usize, seed: u64) -> Result<InvertibleMask, MaskingError> {
    if dim == 0 {
        return Err(MaskingError::InvalidDim(dim));
    }
    for attempt in 0..MAX_MASK_ATTEMPTS {
        let mut rng = rng::stream(seed, &format!("invertible/{attempt}"));
        let matrix = gaussian(dim, dim, &mut rng);
        let sv = matrix.clone().singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        if !(smin > 0.0) || smax / smin > MAX_MASK_CONDITION {
            continue;
        }
        if let Some(inverse) = matrix.clone().lu().try_inverse() {
            return Ok(InvertibleMask { matrix, inverse, condition: smax / smin, seed, attempts: attempt + 1 });
        }
    }
    Err(MaskingError::MaskGenerationFailed { dim, attempts: MAX_MASK_ATTEMPTS })
}
