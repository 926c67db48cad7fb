//! Dense row-major matrices and the numeric kernels the editors are built on.
//!
//! The matrices here are small (tens to hundreds of rows), so everything is
//! plain `f64` loops over contiguous storage. What matters is not raw speed
//! but exact numeric contracts:
//!
//! - Gram products `K Kᵀ` are symmetric by construction (the lower triangle
//!   is mirrored from the upper, never recomputed).
//! - Right-sided solves `X (A + λI) = B` factor the transposed system with
//!   partial pivoting and abort with [`LinalgError::SingularMatrix`] instead
//!   of silently regularizing.
//! - The SVD is a one-sided Jacobi iteration whose left factor stays
//!   orthonormal even for zero singular values.
//!
//! With the `parallel` feature, `matmul` and `gram` split work per output
//! element above a flop threshold. Each output element is still a single
//! sequential dot product, so parallel and sequential paths produce
//! bit-identical results regardless of thread count.

mod solve;
mod svd;

pub use solve::solve_right;
pub use svd::{nullspace_projector, svd, SvdResult, DEFAULT_RANK_TOL};

use thiserror::Error;

/// Errors from the dense kernels.
#[derive(Debug, Error)]
pub enum LinalgError {
    /// Operand shapes do not conform for the named operation.
    #[error("shape mismatch in {op}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },

    /// A constructor or kernel saw NaN or infinity.
    #[error("non-finite value in {op}")]
    NonFinite { op: &'static str },

    /// Elimination hit a pivot at or below the abort threshold.
    #[error("singular system: pivot {pivot:.3e} <= tol {tol:.3e} at column {col}")]
    SingularMatrix { pivot: f64, tol: f64, col: usize },

    /// An iterative kernel exhausted its sweep budget.
    #[error("SVD failed to converge within {sweeps} sweeps")]
    ConvergenceFailure { sweeps: usize },
}

/// Row-major dense matrix. Dimensions may be zero (a `d x 0` matrix is the
/// empty stack of column vectors); all entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// Minimum multiply-accumulate count before `matmul`/`gram` go parallel.
/// Below it the rayon dispatch overhead dominates.
#[cfg(feature = "parallel")]
const PAR_FLOP_THRESHOLD: usize = 1 << 17;

impl Matrix {
    /// Validating constructor: `data` is row-major, length `rows * cols`,
    /// all entries finite.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::ShapeMismatch {
                op: "Matrix::new",
                expected: (rows, cols),
                got: (data.len(), 1),
            });
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(LinalgError::NonFinite { op: "Matrix::new" });
        }
        Ok(Self { rows, cols, data })
    }

    /// Internal constructor for values produced by the kernels themselves.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        debug_assert!(data.iter().all(|x| x.is_finite()));
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_raw(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        debug_assert!(data.iter().all(|x| x.is_finite()));
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(v.is_finite());
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Matrix::from_raw(self.cols, self.rows, out)
    }

    /// `self + rhs`, entrywise. Shapes must match.
    pub fn add(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(
            (self.rows, self.cols),
            (rhs.rows, rhs.cols),
            "add: shape mismatch"
        );
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| a + b)
            .collect();
        Matrix::from_raw(self.rows, self.cols, data)
    }

    /// `self - rhs`, entrywise. Shapes must match.
    pub fn sub(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(
            (self.rows, self.cols),
            (rhs.rows, rhs.cols),
            "sub: shape mismatch"
        );
        let data = self
            .data
            .iter()
            .zip(&rhs.data)
            .map(|(a, b)| a - b)
            .collect();
        Matrix::from_raw(self.rows, self.cols, data)
    }

    pub fn scale(&self, s: f64) -> Matrix {
        let data = self.data.iter().map(|a| a * s).collect();
        Matrix::from_raw(self.rows, self.cols, data)
    }

    /// Adds `r` to the diagonal. Square matrices only.
    pub fn add_ridge(&self, r: f64) -> Matrix {
        assert_eq!(self.rows, self.cols, "add_ridge: square required");
        let mut out = self.clone();
        for i in 0..self.rows {
            out.data[i * self.cols + i] += r;
        }
        out
    }

    /// Concatenates matrices left to right. All parts share the row count.
    pub fn hstack(parts: &[&Matrix]) -> Matrix {
        assert!(!parts.is_empty(), "hstack: no parts");
        let rows = parts[0].rows;
        assert!(
            parts.iter().all(|p| p.rows == rows),
            "hstack: row mismatch"
        );
        let cols: usize = parts.iter().map(|p| p.cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut off = 0;
        for p in parts {
            for i in 0..rows {
                out.data[i * cols + off..i * cols + off + p.cols]
                    .copy_from_slice(p.row(i));
            }
            off += p.cols;
        }
        out
    }

    /// `self * rhs`. Dispatches to the parallel kernel above the flop
    /// threshold when the `parallel` feature is on; results are identical
    /// either way.
    pub fn matmul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows, "matmul: inner dimension mismatch");
        #[cfg(feature = "parallel")]
        {
            if self.rows * self.cols * rhs.cols >= PAR_FLOP_THRESHOLD && self.rows > 1 {
                return self.matmul_par(rhs);
            }
        }
        self.matmul_seq(rhs)
    }

    /// Sequential matrix product. Public so benchmarks can pin the fallback.
    pub fn matmul_seq(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows, "matmul: inner dimension mismatch");
        let mut out = vec![0.0; self.rows * rhs.cols];
        for i in 0..self.rows {
            matmul_row(self.row(i), rhs, &mut out[i * rhs.cols..(i + 1) * rhs.cols]);
        }
        Matrix::from_raw(self.rows, rhs.cols, out)
    }

    #[cfg(feature = "parallel")]
    fn matmul_par(&self, rhs: &Matrix) -> Matrix {
        use rayon::prelude::*;
        let mut out = vec![0.0; self.rows * rhs.cols];
        out.par_chunks_mut(rhs.cols)
            .enumerate()
            .for_each(|(i, orow)| matmul_row(self.row(i), rhs, orow));
        Matrix::from_raw(self.rows, rhs.cols, out)
    }
}

/// One output row of a product: `orow[j] = Σ_k arow[k] rhs[k, j]`.
///
/// Accumulation order over k is fixed (ascending), so every output element
/// is the same floating-point fold no matter how rows are scheduled.
fn matmul_row(arow: &[f64], rhs: &Matrix, orow: &mut [f64]) {
    for (k, &aik) in arow.iter().enumerate() {
        let brow = rhs.row(k);
        for (o, &bkj) in orow.iter_mut().zip(brow) {
            *o += aik * bkj;
        }
    }
}

/// Gram product `G = K Kᵀ` (shape `d x d` for `K: d x n`).
///
/// Computes the upper triangle as row dot products and mirrors it, so the
/// result is exactly symmetric. An empty `K` (zero columns) yields the zero
/// matrix.
pub fn gram(k: &Matrix) -> Matrix {
    #[cfg(feature = "parallel")]
    {
        let d = k.rows();
        if d * d * k.cols() / 2 >= PAR_FLOP_THRESHOLD && d > 1 {
            return gram_par(k);
        }
    }
    gram_seq(k)
}

/// Sequential Gram product. Public so benchmarks can pin the fallback.
pub fn gram_seq(k: &Matrix) -> Matrix {
    let d = k.rows();
    let mut g = Matrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = dot(k.row(i), k.row(j));
            g.data[i * d + j] = v;
            g.data[j * d + i] = v;
        }
    }
    g
}

#[cfg(feature = "parallel")]
fn gram_par(k: &Matrix) -> Matrix {
    use rayon::prelude::*;
    let d = k.rows();
    let upper: Vec<Vec<f64>> = (0..d)
        .into_par_iter()
        .map(|i| (i..d).map(|j| dot(k.row(i), k.row(j))).collect())
        .collect();
    let mut g = Matrix::zeros(d, d);
    for (i, row) in upper.iter().enumerate() {
        for (off, &v) in row.iter().enumerate() {
            let j = i + off;
            g.data[i * d + j] = v;
            g.data[j * d + i] = v;
        }
    }
    g
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

/// Frobenius norm `sqrt(Σ aᵢⱼ²)`.
pub fn frob_norm(a: &Matrix) -> f64 {
    a.data.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Relative error `‖a − b‖_F / max(1e-30, ‖b‖_F)`.
pub fn rel_err(a: &Matrix, b: &Matrix) -> Result<f64, LinalgError> {
    if (a.rows, a.cols) != (b.rows, b.cols) {
        return Err(LinalgError::ShapeMismatch {
            op: "rel_err",
            expected: (b.rows, b.cols),
            got: (a.rows, a.cols),
        });
    }
    Ok(frob_norm(&a.sub(b)) / frob_norm(b).max(1e-30))
}
