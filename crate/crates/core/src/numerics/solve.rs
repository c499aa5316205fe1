use num_complex::Complex64;

use super::{CMatrix, HermitianMatrix};
use crate::{Error, Result};

/// Relative diagonal loading applied to covariance inversions when the
/// caller does not choose one: `1e-6 · trace(A) / dim(A)`.
pub const DEFAULT_RIDGE: Ridge = Ridge::Relative(1e-6);

/// Diagonal loading added before a Hermitian solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Ridge {
    /// Multiple of `trace(A) / dim(A)`; scale invariant.
    Relative(f64),
    /// Fixed value added to the diagonal.
    Absolute(f64),
}

impl Ridge {
    pub fn value_for(&self, a: &HermitianMatrix) -> f64 {
        match *self {
            Ridge::Relative(f) => f * (a.trace() / a.dim().max(1) as f64).max(0.0),
            Ridge::Absolute(v) => v,
        }
    }
}

impl Default for Ridge {
    fn default() -> Self {
        DEFAULT_RIDGE
    }
}

/// Solves `(A + ridge·I) X = B`.
///
/// Tries a Cholesky factorization first; if the loaded matrix is not
/// numerically positive definite it falls back to Gaussian elimination with
/// partial pivoting. A pivot below `1e-14` of the matrix scale is reported
/// as [`Error::Singular`] with the pivot-ratio condition estimate.
pub fn hermitian_solve(a: &HermitianMatrix, b: &CMatrix, ridge: f64) -> Result<CMatrix> {
    let n = a.dim();
    if b.rows() != n {
        return Err(Error::ShapeMismatch(format!(
            "system matrix is {n}x{n} but right-hand side has {} rows",
            b.rows()
        )));
    }
    if !(ridge >= 0.0) {
        return Err(Error::Config(format!("ridge must be non-negative, got {ridge}")));
    }
    if n == 0 {
        return Ok(CMatrix::zeros(0, b.cols()));
    }
    let mut loaded = a.as_matrix().clone();
    for i in 0..n {
        loaded[(i, i)].re += ridge;
    }
    match cholesky(&loaded) {
        Some(l) => Ok(cholesky_solve(&l, b)),
        None => lu_solve(loaded, b),
    }
}

/// Vector form of [`hermitian_solve`].
pub fn hermitian_solve_vec(a: &HermitianMatrix, b: &[Complex64], ridge: f64) -> Result<Vec<Complex64>> {
    let x = hermitian_solve(a, &CMatrix::column_vector(b), ridge)?;
    Ok(x.as_slice().to_vec())
}

/// Lower-triangular Cholesky factor, or `None` when a pivot is not safely
/// positive.
fn cholesky(a: &CMatrix) -> Option<CMatrix> {
    let n = a.rows();
    let scale = (0..n).map(|i| a[(i, i)].re.abs()).fold(0.0, f64::max);
    if !(scale > 0.0) || !scale.is_finite() {
        return None;
    }
    let tol = 1e-14 * scale;
    let mut l = CMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > tol) {
            return None;
        }
        let djj = d.sqrt();
        l[(j, j)] = Complex64::new(djj, 0.0);
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    Some(l)
}

fn cholesky_solve(l: &CMatrix, b: &CMatrix) -> CMatrix {
    let n = l.rows();
    let mut x = b.clone();
    for c in 0..b.cols() {
        // L y = b
        for i in 0..n {
            let mut s = x[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)].re;
        }
        // Lᴴ x = y
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in i + 1..n {
                s -= l[(k, i)].conj() * x[(k, c)];
            }
            x[(i, c)] = s / l[(i, i)].re;
        }
    }
    x
}

fn lu_solve(mut a: CMatrix, b: &CMatrix) -> Result<CMatrix> {
    let n = a.rows();
    let mut x = b.clone();
    let scale = a.max_abs();
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Singular { condition: f64::INFINITY });
    }
    let mut max_pivot: f64 = 0.0;
    let mut min_pivot = f64::INFINITY;
    for col in 0..n {
        let (p, pmag) = (col..n)
            .map(|r| (r, a[(r, col)].norm()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        max_pivot = max_pivot.max(pmag);
        min_pivot = min_pivot.min(pmag);
        if pmag <= 1e-14 * scale {
            let condition = if pmag > 0.0 { max_pivot / pmag } else { f64::INFINITY };
            return Err(Error::Singular { condition });
        }
        if p != col {
            for j in 0..n {
                let t = a[(col, j)];
                a[(col, j)] = a[(p, j)];
                a[(p, j)] = t;
            }
            for j in 0..x.cols() {
                let t = x[(col, j)];
                x[(col, j)] = x[(p, j)];
                x[(p, j)] = t;
            }
        }
        let pivot = a[(col, col)];
        for r in col + 1..n {
            let f = a[(r, col)] / pivot;
            if f == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in col..n {
                let v = a[(col, j)];
                a[(r, j)] -= f * v;
            }
            for j in 0..x.cols() {
                let v = x[(col, j)];
                x[(r, j)] -= f * v;
            }
        }
    }
    for c in 0..x.cols() {
        for i in (0..n).rev() {
            let mut s = x[(i, c)];
            for k in i + 1..n {
                s -= a[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / a[(i, i)];
        }
    }
    log::debug!(
        "indefinite system solved by pivoted elimination (pivot ratio {:.3e})",
        max_pivot / min_pivot
    );
    Ok(x)
}
