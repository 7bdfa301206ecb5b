//! Algebra that maps masked components back to the original space.
//!
//! With `X′ = A X H` and `Y′ = A Y G` for orthogonal `A`, `H`, `G`, the
//! masked fit satisfies `T = AᵀT′`, `U = AᵀU′`, `W = HW′`, `P = HP′`,
//! `Q = GQ′`, `R = HR′` and `B = HB′Gᵀ`. Row block `i` of `H` is `H_i`, so a
//! feature contributor's rows of `W`, `P` and `B` only need `H_i`.

use crate::RealMatrix;

/// `T = AᵀT′`; also used for `U`.
pub fn unmask_scores(a: &RealMatrix, masked: &RealMatrix) -> RealMatrix {
    a.tr_mul(masked)
}

/// `Q = GQ′`.
pub fn unmask_y_loadings(g: &RealMatrix, masked: &RealMatrix) -> RealMatrix {
    g * masked
}

/// `[H_i]^C = C_i H_i`, where `h_i_t` is the issued split `H_iᵀ`.
pub fn mask_local_key(c: &RealMatrix, h_i_t: &RealMatrix) -> RealMatrix {
    c * h_i_t.transpose()
}

/// `[Gᵀ]^N = GᵀN`.
pub fn mask_target_key(g: &RealMatrix, n: &RealMatrix) -> RealMatrix {
    g.tr_mul(n)
}

/// `[H_i]^C Z′` for a masked-space `Z′` with one row per masked feature.
pub fn masked_local_share(masked_h: &RealMatrix, component: &RealMatrix) -> RealMatrix {
    masked_h * component
}

/// `[B_i]^C = [H_i]^C B′ [Gᵀ]^N`.
pub fn masked_local_coefficients(masked_h: &RealMatrix, b_prime: &RealMatrix, masked_gt: &RealMatrix) -> RealMatrix {
    masked_h * b_prime * masked_gt
}

/// `C_i⁻¹ [Z_i]^C`.
pub fn unmask_local(c_inv: &RealMatrix, masked: &RealMatrix) -> RealMatrix {
    c_inv * masked
}

/// `C_i⁻¹ [B_i]^C N⁻¹`.
pub fn unmask_local_coefficients(c_inv: &RealMatrix, masked: &RealMatrix, n_inv: &RealMatrix) -> RealMatrix {
    c_inv * masked * n_inv
}

/// `SS(E′)` for `E′ = Y′ − Ŷ′`, as the sum of the eigenvalues of `E′ᵀE′`.
/// Orthogonal masks on both sides leave it equal to `SS(Y − Ŷ)`.
pub fn masked_residual_ss(y_masked: &RealMatrix, y_hat_masked: &RealMatrix) -> f64 {
    let e = y_masked - y_hat_masked;
    e.tr_mul(&e).symmetric_eigen().eigenvalues.sum()
}

/// `1 − SS/(m·l)`: with standardized Y, `SS(Y) = (m−1)l`.
pub fn residual_r2(ss: f64, m: usize, l: usize) -> f64 {
    1.0 - ss / (m * l) as f64
}
