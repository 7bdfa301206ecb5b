//! Power-iteration NIPALS-PLS2 used only as a test oracle.
//!
//! Shares no code with the SVD-based fit: weights come from alternating
//! X/Y projections until the score vector stops moving, and `(PᵀW)⁻¹` is an
//! explicit inverse rather than a pivoted solve.

use nalgebra::{DMatrix, DVector};

#[allow(dead_code)]
pub struct NipalsFit {
    pub weights: DMatrix<f64>,
    pub x_scores: DMatrix<f64>,
    pub x_loadings: DMatrix<f64>,
    pub y_loadings: DMatrix<f64>,
    pub coefficients: DMatrix<f64>,
}

pub fn nipals_pls2(x: &DMatrix<f64>, y: &DMatrix<f64>, k: usize) -> NipalsFit {
    let (m, n) = x.shape();
    let l = y.ncols();
    let mut e = x.clone();
    let mut f = y.clone();
    let mut w_all = DMatrix::zeros(n, k);
    let mut t_all = DMatrix::zeros(m, k);
    let mut p_all = DMatrix::zeros(n, k);
    let mut q_all = DMatrix::zeros(l, k);

    for j in 0..k {
        let start = (0..l).max_by(|&a, &b| f.column(a).norm().total_cmp(&f.column(b).norm())).unwrap();
        let mut u: DVector<f64> = f.column(start).into_owned();
        let mut t_old = DVector::<f64>::zeros(m);
        let mut w = DVector::<f64>::zeros(n);
        let mut t = DVector::<f64>::zeros(m);
        let mut q = DVector::<f64>::zeros(l);
        for _ in 0..200_000 {
            w = e.transpose() * &u;
            w /= w.norm();
            t = &e * &w;
            q = f.transpose() * &t / t.dot(&t);
            u = &f * &q / q.dot(&q);
            let delta = (&t - &t_old).norm() / t.norm();
            t_old.copy_from(&t);
            if delta < 1e-15 {
                break;
            }
        }
        let p = e.transpose() * &t / t.dot(&t);
        e -= &t * p.transpose();
        f -= &t * q.transpose();
        w_all.set_column(j, &w);
        t_all.set_column(j, &t);
        p_all.set_column(j, &p);
        q_all.set_column(j, &q);
    }
    let inv = (p_all.transpose() * &w_all).try_inverse().expect("PᵀW invertible");
    let coefficients = &w_all * inv * q_all.transpose();
    NipalsFit { weights: w_all, x_scores: t_all, x_loadings: p_all, y_loadings: q_all, coefficients }
}
