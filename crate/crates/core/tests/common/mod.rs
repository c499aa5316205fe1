#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rtf_mclp::batch_derev::GammaField;
use rtf_mclp::stft::{StftConfig, StftTensor};

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn crandn(rng: &mut ChaCha8Rng) -> Complex64 {
    let n: rand_distr::StandardNormal = rand_distr::StandardNormal;
    c(rng.sample(n), rng.sample(n))
}

pub fn cvec(rng: &mut ChaCha8Rng, len: usize) -> Vec<Complex64> {
    (0..len).map(|_| crandn(rng)).collect()
}

/// Tiny framing with `bins` frequency bins.
pub fn small_config(bins: usize) -> StftConfig {
    let fft = 2 * (bins - 1);
    StftConfig {
        sample_rate: 16_000,
        window_len: fft,
        hop: fft / 2,
        fft_size: fft,
    }
}

pub fn random_tensor(frames: usize, bins: usize, mics: usize, seed: u64) -> StftTensor {
    let mut r = rng(seed);
    let mut t = StftTensor::zeros(small_config(bins), frames, mics, 0);
    for n in 0..frames {
        for k in 0..bins {
            for m in 0..mics {
                t.set(n, k, m, crandn(&mut r));
            }
        }
    }
    t
}

pub fn random_gamma(frames: usize, bins: usize, seed: u64) -> GammaField {
    let mut r = rng(seed);
    GammaField::new(frames, bins, (0..frames * bins).map(|_| r.random_range(0.2..5.0)).collect())
}

/// Dense weighted least squares `min Σ_n γ⁻¹ |x_m[n] − g_mᴴ φ[n]|²` with
/// `ridge·I` loading, solved by LU on the explicit normal equations.
pub fn dense_mclp(t: &StftTensor, gamma: &GammaField, k: usize, taps: usize, delay: usize, ridge: f64) -> DMatrix<Complex64> {
    let mics = t.mics();
    let dim = mics * taps;
    let rows: Vec<usize> = (delay + 1..t.frames()).collect();
    let mut phi = DMatrix::<Complex64>::zeros(rows.len(), dim);
    let mut x = DMatrix::<Complex64>::zeros(rows.len(), mics);
    let mut w = DMatrix::<Complex64>::zeros(rows.len(), rows.len());
    for (r, &n) in rows.iter().enumerate() {
        for m in 0..mics {
            for l in 0..taps {
                let lag = delay + 1 + l;
                if n >= lag {
                    phi[(r, m * taps + l)] = t.get(n - lag, k, m);
                }
            }
            x[(r, m)] = t.get(n, k, m);
        }
        w[(r, r)] = c(1.0 / gamma.get(n, k), 0.0);
    }
    // R_φφ = Φᵀ W Φ̄, R_φx = Φᵀ W X̄
    let pt = phi.transpose();
    let lhs = &pt * &w * phi.conjugate() + DMatrix::<Complex64>::identity(dim, dim) * c(ridge, 0.0);
    let rhs = &pt * &w * x.conjugate();
    lhs.lu().solve(&rhs).expect("oracle system is singular")
}

pub fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}
