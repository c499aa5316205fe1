//! Complex linear algebra and autoregressive spectral estimation shared by
//! the dereverberation estimators.

mod ar_psd;
mod levinson;
mod matrix;
mod solve;

pub use ar_psd::{ar_psd_frame, ArPsdEstimator, DEFAULT_AR_ORDER};
pub use levinson::{levinson_durbin, ArModel, REFLECTION_CLAMP};
pub use matrix::{CMatrix, HermitianMatrix};
pub use solve::{hermitian_solve, hermitian_solve_vec, Ridge, DEFAULT_RIDGE};

use num_complex::Complex64;

/// `aᴴb`.
#[inline]
pub fn dot_conj(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[inline]
pub fn energy(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}
