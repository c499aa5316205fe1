use std::ops::{Index, IndexMut};

use num_complex::Complex64;

use crate::{Error, Result};

/// Dense row-major complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Single-column matrix.
    pub fn column_vector(v: &[Complex64]) -> Self {
        Self {
            rows: v.len(),
            cols: 1,
            data: v.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_column(&mut self, j: usize, v: &[Complex64]) {
        assert_eq!(v.len(), self.rows);
        for (i, &z) in v.iter().enumerate() {
            self[(i, j)] = z;
        }
    }

    pub fn conj_transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn matmul(&self, rhs: &CMatrix) -> Result<CMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = CMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self[(i, l)];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let src = rhs.row(l);
                let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (d, &b) in dst.iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `selfᴴ v`, computed without materializing the conjugate transpose.
    pub fn conj_transpose_mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(v.len(), self.rows);
        let mut out = vec![Complex64::new(0.0, 0.0); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a.conj() * vi;
            }
        }
        out
    }

    pub fn sub(&self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Square complex matrix kept Hermitian by its constructors and updates.
///
/// Covariance accumulators (`Σ w φφᴴ`) are the main use; the rank-one update
/// writes both triangles so the stored matrix is Hermitian to rounding.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix(CMatrix);

impl HermitianMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self(CMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self(CMatrix::identity(dim))
    }

    pub fn scaled_identity(dim: usize, scale: f64) -> Self {
        let mut m = Self::zeros(dim);
        m.add_to_diagonal(scale);
        m
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m.0[(i, i)] = Complex64::new(v, 0.0);
        }
        m
    }

    /// Wraps `m` after checking it is square and Hermitian to `1e-12`
    /// relative to its largest entry. The stored copy is symmetrized.
    pub fn from_matrix(m: CMatrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::ShapeMismatch(format!(
                "Hermitian matrix must be square, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        let scale = m.max_abs().max(f64::MIN_POSITIVE);
        for i in 0..m.rows() {
            for j in i..m.cols() {
                if (m[(i, j)] - m[(j, i)].conj()).norm() > 1e-12 * scale {
                    return Err(Error::ShapeMismatch(format!(
                        "matrix is not Hermitian at ({i}, {j})"
                    )));
                }
            }
        }
        let mut h = Self(m);
        h.symmetrize();
        Ok(h)
    }

    /// `v vᴴ`.
    pub fn outer(v: &[Complex64]) -> Self {
        let mut m = Self::zeros(v.len());
        m.add_outer(v, 1.0);
        m
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.0[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.0[(i, i)].re).sum()
    }

    /// `self += weight · v vᴴ`.
    pub fn add_outer(&mut self, v: &[Complex64], weight: f64) {
        let n = self.dim();
        assert_eq!(v.len(), n);
        for i in 0..n {
            let vi = v[i] * weight;
            let row = &mut self.0.data[i * n..(i + 1) * n];
            for (r, vj) in row.iter_mut().zip(v) {
                *r += vi * vj.conj();
            }
        }
    }

    /// `self += weight · v vᴴ` touching only the upper triangle. Call
    /// [`HermitianMatrix::mirror_upper`] once accumulation is done.
    pub fn add_outer_upper(&mut self, v: &[Complex64], weight: f64) {
        let n = self.dim();
        for i in 0..n {
            let vi = v[i] * weight;
            let row = &mut self.0.data[i * n + i..(i + 1) * n];
            for (r, vj) in row.iter_mut().zip(&v[i..]) {
                *r += vi * vj.conj();
            }
        }
    }

    /// Copies the upper triangle into the lower one and zeroes the
    /// imaginary part of the diagonal.
    pub fn mirror_upper(&mut self) {
        let n = self.dim();
        for i in 0..n {
            self.0[(i, i)].im = 0.0;
            for j in i + 1..n {
                let v = self.0[(i, j)];
                self.0[(j, i)] = v.conj();
            }
        }
    }

    /// `self ← (self + selfᴴ) / 2`.
    pub fn symmetrize(&mut self) {
        let n = self.dim();
        for i in 0..n {
            self.0[(i, i)].im = 0.0;
            for j in i + 1..n {
                let avg = (self.0[(i, j)] + self.0[(j, i)].conj()) * 0.5;
                self.0[(i, j)] = avg;
                self.0[(j, i)] = avg.conj();
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for z in &mut self.0.data {
            *z *= factor;
        }
    }

    pub fn add_to_diagonal(&mut self, value: f64) {
        for i in 0..self.dim() {
            self.0[(i, i)].re += value;
        }
    }

    pub fn add_diagonal(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.dim());
        for (i, &v) in values.iter().enumerate() {
            self.0[(i, i)].re += v;
        }
    }

    /// `self ← (1 − α) self + α · weight · v vᴴ`.
    pub fn recursive_update(&mut self, v: &[Complex64], alpha: f64, weight: f64) {
        self.scale(1.0 - alpha);
        self.add_outer(v, alpha * weight);
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.0.mul_vec(v)
    }

    /// `vᴴ A v`, real for Hermitian `A`.
    pub fn quadratic_form(&self, v: &[Complex64]) -> f64 {
        let av = self.mul_vec(v);
        super::dot_conj(v, &av).re
    }

    /// Largest deviation from Hermitian symmetry, relative to the largest
    /// entry.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim();
        let scale = self.0.max_abs().max(f64::MIN_POSITIVE);
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.0[(i, j)] - self.0[(j, i)].conj()).norm());
            }
        }
        worst / scale
    }
}
