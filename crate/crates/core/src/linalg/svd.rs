//! One-sided Jacobi SVD and the null-space projector built on it.

use super::{dot, LinalgError, Matrix};

/// Default relative cutoff separating signal from null directions.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Sweep budget for the Jacobi iteration; typical convergence is under ten
/// sweeps even at 64x64.
const MAX_SWEEPS: usize = 64;

/// A pair of columns is considered orthogonal when
/// `|γ| <= JACOBI_TOL · sqrt(α β)`. This bounds the off-diagonal mass of
/// `uᵀu` by the same factor, well inside the 1e-10 orthonormality contract.
const JACOBI_TOL: f64 = 1e-14;

/// Thin singular value decomposition `a = u · diag(s) · vt`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    /// Left factor, `rows x k`; columns orthonormal within 1e-10.
    pub u: Matrix,
    /// Singular values, non-negative, non-increasing, length `k = min(rows, cols)`.
    pub s: Vec<f64>,
    /// Right factor, `k x cols`; rows orthonormal within 1e-10.
    pub vt: Matrix,
}

/// Computes the thin SVD by one-sided Jacobi rotations.
///
/// Columns of a working copy are rotated pairwise until mutually orthogonal;
/// their norms are the singular values and the accumulated rotations give the
/// right factor. Matrices with `rows < cols` go through the transpose. Exact
/// zero columns in the converged basis get their left vectors from a
/// Gram-Schmidt completion so `uᵀu = I` holds even for zero singular values.
pub fn svd(a: &Matrix) -> Result<SvdResult, LinalgError> {
    let (m, n) = (a.rows(), a.cols());
    if m == 0 || n == 0 {
        return Ok(SvdResult {
            u: Matrix::zeros(m, 0),
            s: Vec::new(),
            vt: Matrix::zeros(0, n),
        });
    }
    if m < n {
        let t = svd(&a.transpose())?;
        return Ok(SvdResult {
            u: t.vt.transpose(),
            s: t.s,
            vt: t.u.transpose(),
        });
    }

    // columns as contiguous vectors; v accumulates the rotations
    let at = a.transpose();
    let mut b: Vec<Vec<f64>> = (0..n).map(|j| at.row(j).to_vec()).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let alpha = dot(&b[p], &b[p]);
                let beta = dot(&b[q], &b[q]);
                let gamma = dot(&b[p], &b[q]);
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut b, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(LinalgError::ConvergenceFailure { sweeps: MAX_SWEEPS });
    }

    // sort by descending norm, ties keep the lower original index
    let norms: Vec<f64> = b.iter().map(|col| dot(col, col).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap().then(i.cmp(&j)));

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut s_out = Vec::with_capacity(n);
    for &j in &order {
        s_out.push(norms[j]);
        if norms[j] > 0.0 {
            u_cols.push(b[j].iter().map(|x| x / norms[j]).collect());
        } else {
            u_cols.push(complete_basis(&u_cols, m));
        }
    }

    let mut u = Matrix::zeros(m, n);
    for (j, col) in u_cols.iter().enumerate() {
        for i in 0..m {
            u.set(i, j, col[i]);
        }
    }
    let mut vt = Matrix::zeros(n, n);
    for (r, &j) in order.iter().enumerate() {
        for c in 0..n {
            vt.set(r, c, v[j][c]);
        }
    }
    if !s_out.iter().all(|x| x.is_finite()) {
        return Err(LinalgError::NonFinite { op: "svd" });
    }
    Ok(SvdResult { u, s: s_out, vt })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    // split_at_mut gives disjoint access to the two columns
    let (lo, hi) = cols.split_at_mut(q);
    let cp = &mut lo[p];
    let cq = &mut hi[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let xp = c * *x - s * *y;
        let xq = s * *x + c * *y;
        *x = xp;
        *y = xq;
    }
}

/// Unit vector orthogonal to all of `existing`, chosen as the standard basis
/// vector with the largest residual after projection. For `k < m` existing
/// orthonormal columns the best residual norm is at least `sqrt((m-k)/m)`,
/// so this never degenerates.
fn complete_basis(existing: &[Vec<f64>], m: usize) -> Vec<f64> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for i in 0..m {
        let mut cand = vec![0.0; m];
        cand[i] = 1.0;
        for col in existing {
            let proj = dot(&cand, col);
            for (c, u) in cand.iter_mut().zip(col) {
                *c -= proj * u;
            }
        }
        let norm = dot(&cand, &cand).sqrt();
        if best.as_ref().map_or(true, |(b, _)| norm > *b) {
            best = Some((norm, cand));
        }
    }
    let (norm, cand) = best.expect("m > 0");
    cand.iter().map(|x| x / norm).collect()
}

/// Projector onto the orthogonal complement of the kept left singular
/// directions of `k0`: `P = I − U_r U_rᵀ` with `σᵢ > rank_tol · σ_max` kept.
///
/// `P` is exactly symmetric (upper triangle mirrored). A zero or empty `k0`
/// has nothing to protect, so `P = I`; a full-rank `k0` spans everything, so
/// `P` is the exact zero map rather than `I − U Uᵀ` roundoff residue, and
/// systems projected through it fail as singular instead of solving noise.
pub fn nullspace_projector(k0: &Matrix, rank_tol: f64) -> Result<Matrix, LinalgError> {
    let d = k0.rows();
    if k0.cols() == 0 {
        return Ok(Matrix::identity(d));
    }
    let dec = svd(k0)?;
    let smax = dec.s.first().copied().unwrap_or(0.0);
    if smax <= 0.0 {
        return Ok(Matrix::identity(d));
    }
    let r = dec.s.iter().take_while(|&&x| x > rank_tol * smax).count();
    if r == d {
        return Ok(Matrix::zeros(d, d));
    }
    let mut p = Matrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let mut v = if i == j { 1.0 } else { 0.0 };
            for t in 0..r {
                v -= dec.u.get(i, t) * dec.u.get(j, t);
            }
            p.set(i, j, v);
            p.set(j, i, v);
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frob_norm, rel_err};

    fn m(rows: usize, cols: usize, data: &[f64]) -> Matrix {
        Matrix::new(rows, cols, data.to_vec()).unwrap()
    }

    fn reconstruct(d: &SvdResult) -> Matrix {
        let k = d.s.len();
        let mut us = d.u.clone();
        for j in 0..k {
            for i in 0..us.rows() {
                us.set(i, j, us.get(i, j) * d.s[j]);
            }
        }
        us.matmul(&d.vt)
    }

    fn assert_orthonormal(u: &Matrix, tol: f64) {
        let g = u.transpose().matmul(u);
        let err = frob_norm(&g.sub(&Matrix::identity(u.cols())));
        assert!(err <= tol, "uᵀu deviates from I by {err:.3e}");
    }

    #[test]
    fn diagonal_matrix_is_exact() {
        let d = svd(&m(2, 2, &[3.0, 0.0, 0.0, 1.0])).unwrap();
        assert_eq!(d.s, vec![3.0, 1.0]);
        assert_eq!(d.u, Matrix::identity(2));
        assert_eq!(d.vt, Matrix::identity(2));
    }

    #[test]
    fn antidiagonal_sorting_and_reconstruction() {
        let a = m(2, 2, &[0.0, 2.0, 1.0, 0.0]);
        let d = svd(&a).unwrap();
        assert_eq!(d.s, vec![2.0, 1.0]);
        assert_eq!(reconstruct(&d), a);
    }

    #[test]
    fn zero_matrix_keeps_orthonormal_left_factor() {
        let d = svd(&Matrix::zeros(2, 2)).unwrap();
        assert_eq!(d.s, vec![0.0, 0.0]);
        assert_orthonormal(&d.u, 1e-12);
        assert_eq!(frob_norm(&reconstruct(&d)), 0.0);
    }

    #[test]
    fn rank_one_matrix() {
        let a = m(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let d = svd(&a).unwrap();
        assert!(d.s[0] > 0.0);
        assert!(d.s[1] <= 1e-12 * d.s[0]);
        assert!(rel_err(&reconstruct(&d), &a).unwrap() <= 1e-8);
        assert_orthonormal(&d.u, 1e-10);
    }

    #[test]
    fn wide_matrix_goes_through_transpose() {
        let a = Matrix::from_fn(2, 5, |i, j| ((i * 5 + j) as f64) * 0.3 - 1.0);
        let d = svd(&a).unwrap();
        assert_eq!((d.u.rows(), d.u.cols()), (2, 2));
        assert_eq!((d.vt.rows(), d.vt.cols()), (2, 5));
        assert!(rel_err(&reconstruct(&d), &a).unwrap() <= 1e-8);
        assert_orthonormal(&d.u, 1e-10);
        assert_orthonormal(&d.vt.transpose(), 1e-10);
    }

    #[test]
    fn dense_square_matrix_contracts() {
        let a = Matrix::from_fn(8, 8, |i, j| (((i * 13 + j * 29 + 5) % 17) as f64) * 0.21 - 1.6);
        let d = svd(&a).unwrap();
        assert!(rel_err(&reconstruct(&d), &a).unwrap() <= 1e-8);
        assert_orthonormal(&d.u, 1e-10);
        assert_orthonormal(&d.vt.transpose(), 1e-10);
        for w in d.s.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn projector_of_axis_column() {
        let p = nullspace_projector(&m(2, 1, &[1.0, 0.0]), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(p, m(2, 2, &[0.0, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn projector_of_full_rank_is_exactly_zero() {
        let k = m(2, 2, &[1.0, 0.3, -0.2, 1.1]);
        let p = nullspace_projector(&k, DEFAULT_RANK_TOL).unwrap();
        assert!(p.data().iter().all(|v| v.to_bits() == 0), "empty nullspace must map to 0");
    }

    #[test]
    fn projector_of_zero_or_empty_is_identity() {
        assert_eq!(
            nullspace_projector(&Matrix::zeros(3, 1), DEFAULT_RANK_TOL).unwrap(),
            Matrix::identity(3)
        );
        assert_eq!(
            nullspace_projector(&Matrix::zeros(3, 0), DEFAULT_RANK_TOL).unwrap(),
            Matrix::identity(3)
        );
    }

    #[test]
    fn projector_annihilates_and_is_idempotent() {
        let k0 = Matrix::from_fn(16, 8, |i, j| (((i * 7 + j * 3) % 19) as f64) * 0.23 - 2.0);
        let p = nullspace_projector(&k0, DEFAULT_RANK_TOL).unwrap();
        assert!(frob_norm(&p.matmul(&k0)) <= 1e-8 * frob_norm(&k0));
        assert!(frob_norm(&p.matmul(&p).sub(&p)) <= 1e-10);
        assert_eq!(p, p.transpose());
        // complement dimension: trace(P) = d - rank(k0)
        let trace: f64 = (0..16).map(|i| p.get(i, i)).sum();
        assert!((trace - 8.0).abs() <= 1e-8);
    }
}
