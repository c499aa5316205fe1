use num_complex::Complex64;
use rayon::prelude::*;

use super::GammaField;
use crate::filters::fill_predictor;
use crate::numerics::{hermitian_solve, CMatrix, HermitianMatrix, Ridge};
use crate::stft::StftTensor;
use crate::{Error, Result};

/// Predictor vector `φ[n, k]`: `x_m[n-D-1 .. n-D-L, k]` stacked mic-major.
pub fn build_predictor(tensor: &StftTensor, n: usize, k: usize, taps: usize, delay: usize) -> Vec<Complex64> {
    let mut phi = vec![Complex64::new(0.0, 0.0); tensor.mics() * taps];
    fill_predictor(tensor, n, k, taps, delay, &mut phi);
    phi
}

/// `γ⁻¹`-weighted correlations `(R_φφ, R_φx)` of one bin.
pub fn weighted_correlations(
    tensor: &StftTensor,
    gamma: &GammaField,
    k: usize,
    taps: usize,
    delay: usize,
) -> (HermitianMatrix, CMatrix) {
    let mics = tensor.mics();
    let dim = mics * taps;
    let mut r_pp = HermitianMatrix::zeros(dim);
    let mut r_px = CMatrix::zeros(dim, mics);
    let mut phi = vec![Complex64::new(0.0, 0.0); dim];
    for n in (delay + 1)..tensor.frames() {
        fill_predictor(tensor, n, k, taps, delay, &mut phi);
        let weight = 1.0 / gamma.get(n, k);
        r_pp.add_outer_upper(&phi, weight);
        let x = tensor.vector(n, k);
        let data = r_px.as_mut_slice();
        for (i, p) in phi.iter().enumerate() {
            let wp = p * weight;
            for (dst, xm) in data[i * mics..(i + 1) * mics].iter_mut().zip(x) {
                *dst += wp * xm.conj();
            }
        }
    }
    r_pp.mirror_upper();
    (r_pp, r_px)
}

fn check_gamma(tensor: &StftTensor, gamma: &GammaField) -> Result<()> {
    if gamma.frames() != tensor.frames() || gamma.bins() != tensor.bins() {
        return Err(Error::ShapeMismatch(format!(
            "γ field is {}×{}, tensor is {}×{}",
            gamma.frames(),
            gamma.bins(),
            tensor.frames(),
            tensor.bins()
        )));
    }
    if !(gamma.min() > 0.0) {
        return Err(Error::Config("γ must be strictly positive".into()));
    }
    Ok(())
}

/// Prediction matrices `G[k] = R_φφ⁻¹ R_φx`, one `ML × M` matrix per bin.
pub fn estimate_mclp_filters(
    tensor: &StftTensor,
    gamma: &GammaField,
    taps: usize,
    delay: usize,
    ridge: Ridge,
) -> Result<Vec<CMatrix>> {
    check_gamma(tensor, gamma)?;
    let dim = tensor.mics() * taps;
    let usable = tensor.frames().saturating_sub(delay + 1);
    if usable < dim {
        log::warn!("only {usable} frames to fit {dim} prediction taps per bin; relying on the ridge");
    }
    (0..tensor.bins())
        .into_par_iter()
        .map(|k| {
            let (r_pp, r_px) = weighted_correlations(tensor, gamma, k, taps, delay);
            if !(r_pp.trace() > 0.0) {
                return Ok(CMatrix::zeros(dim, tensor.mics()));
            }
            hermitian_solve(&r_pp, &r_px, ridge.value_for(&r_pp))
        })
        .collect()
}

/// Splits `x` into the early part `d̂ = x − r̂` and the predicted late
/// reverberation `r̂ = Gᴴφ`.
pub fn prediction_residual(
    tensor: &StftTensor,
    g: &[CMatrix],
    taps: usize,
    delay: usize,
) -> Result<(StftTensor, StftTensor)> {
    let mics = tensor.mics();
    let dim = mics * taps;
    if g.len() != tensor.bins() || g.iter().any(|m| m.rows() != dim || m.cols() != mics) {
        return Err(Error::ShapeMismatch(format!(
            "expected {} prediction matrices of {dim}×{mics}",
            tensor.bins()
        )));
    }
    let mut early = tensor.clone();
    let mut late = tensor.zeros_like(mics);
    let mut phi = vec![Complex64::new(0.0, 0.0); dim];
    for n in 0..tensor.frames() {
        for k in 0..tensor.bins() {
            fill_predictor(tensor, n, k, taps, delay, &mut phi);
            let gk = &g[k];
            let r = late.vector_mut(n, k);
            for (i, p) in phi.iter().enumerate() {
                if p.re == 0.0 && p.im == 0.0 {
                    continue;
                }
                for (rm, gim) in r.iter_mut().zip(gk.row(i)) {
                    *rm += gim.conj() * p;
                }
            }
            let r = late.vector(n, k).to_vec();
            for (d, rm) in early.vector_mut(n, k).iter_mut().zip(&r) {
                *d -= rm;
            }
        }
    }
    Ok((early, late))
}
