//! Brute-force reference solver, kept deliberately off the editors' solve
//! path: editors factorize normal equations, this fits each output row
//! through the SVD pseudo-inverse of the design. Agreement between the two
//! routes is evidence, not construction.

use super::HarnessError;
use crate::linalg::{svd, Matrix};

/// Ridge least-squares delta: for each output row `i` of the residual
/// `R = v_all − w0 · k_all`, minimizes `‖δᵀ k_all − r_i‖² + λ‖δ‖²` and
/// assembles the rows into Δ. Singular values at or below `1e-10 · σ_max`
/// are treated as exact zeros, so rank-deficient designs fall back to the
/// minimum-norm solution instead of erroring.
pub fn oracle_ols(
    w0: &Matrix,
    k_all: &Matrix,
    v_all: &Matrix,
    lambda: f64,
) -> Result<Matrix, HarnessError> {
    if k_all.rows() != w0.cols() || v_all.rows() != w0.rows() || k_all.cols() != v_all.cols() {
        return Err(HarnessError::Config(format!(
            "oracle shapes inconsistent: w0 {}x{}, k {}x{}, v {}x{}",
            w0.rows(),
            w0.cols(),
            k_all.rows(),
            k_all.cols(),
            v_all.rows(),
            v_all.cols()
        )));
    }
    let dec = svd(k_all).map_err(crate::editors::EditError::from)?;
    let k = dec.s.len();
    let smax = dec.s.first().copied().unwrap_or(0.0);
    let cutoff = 1e-10 * smax;
    let factors: Vec<f64> = dec
        .s
        .iter()
        .map(|&s| if s > cutoff { s / (s * s + lambda) } else { 0.0 })
        .collect();

    let r = v_all.sub(&w0.matmul(k_all));
    let mut delta = Matrix::zeros(w0.rows(), w0.cols());
    for i in 0..w0.rows() {
        // coefficients of row i in the right singular basis
        let mut coef = vec![0.0; k];
        for (j, c) in coef.iter_mut().enumerate() {
            let mut acc = 0.0;
            for n in 0..r.cols() {
                acc += r.get(i, n) * dec.vt.get(j, n);
            }
            *c = acc * factors[j];
        }
        for jj in 0..w0.cols() {
            let mut acc = 0.0;
            for (j, c) in coef.iter().enumerate() {
                acc += c * dec.u.get(jj, j);
            }
            delta.set(i, jj, acc);
        }
    }
    Ok(delta)
}
