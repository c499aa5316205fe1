use num_complex::Complex64;

use crate::batch_derev::{mvdr_weights, rtf_from_covariance};
use crate::numerics::{dot_conj, CMatrix, HermitianMatrix, Ridge};

/// Online state of one frequency bin.
#[derive(Clone, Debug)]
pub struct KalmanBinState {
    /// Posterior means, column `m` is `μ_m` (`ML × M`, usable as `G`).
    pub mu: CMatrix,
    /// Posterior covariance shared by all mics.
    pub sigma: HermitianMatrix,
    /// Innovation variances, the diagonal of `Λ`.
    pub lambda: Vec<f64>,
    /// Means before the most recent update.
    pub prev_mu: CMatrix,
    pub r_rr: HermitianMatrix,
    pub r_dd: HermitianMatrix,
    pub a: Vec<Complex64>,
    pub w: Vec<Complex64>,
    pub reference_mic: usize,
    /// `R_dd` still awaits its first-frame initialisation.
    pub r_dd_pending: bool,
}

impl KalmanBinState {
    /// Initial state: `μ = 0`, `Σ = ηI`, `Λ = εI`, `w = 1/√M`, `a = e_ref`.
    pub fn new(mics: usize, taps: usize, eta: f64, epsilon: f64, reference_mic: usize, reverb_floor: f64) -> Self {
        let dim = mics * taps;
        let mut a = vec![Complex64::new(0.0, 0.0); mics];
        a[reference_mic] = Complex64::new(1.0, 0.0);
        Self {
            mu: CMatrix::zeros(dim, mics),
            sigma: HermitianMatrix::scaled_identity(dim, eta),
            lambda: vec![epsilon; dim],
            prev_mu: CMatrix::zeros(dim, mics),
            r_rr: HermitianMatrix::scaled_identity(mics, reverb_floor),
            r_dd: HermitianMatrix::zeros(mics),
            a,
            w: vec![Complex64::new(1.0 / (mics as f64).sqrt(), 0.0); mics],
            reference_mic,
            r_dd_pending: true,
        }
    }

    pub fn mics(&self) -> usize {
        self.mu.cols()
    }

    /// `x − μᴴφ` into `out`.
    pub fn residual_into(&self, x: &[Complex64], phi: &[Complex64], out: &mut [Complex64]) {
        out.copy_from_slice(x);
        let mics = x.len();
        let data = self.mu.as_slice();
        for (i, p) in phi.iter().enumerate() {
            if p.re == 0.0 && p.im == 0.0 {
                continue;
            }
            for m in 0..mics {
                out[m] -= data[i * mics + m].conj() * p;
            }
        }
    }
}

/// Time update: `μ` unchanged, `Σ ← Σ + Λ`.
pub fn kalman_predict(state: &mut KalmanBinState) {
    state.sigma.add_diagonal(&state.lambda);
}

/// Measurement update with one shared gain for all mics. Returns the
/// a-priori errors `e_m = x_m − μ_mᴴφ`.
pub fn kalman_update(state: &mut KalmanBinState, x: &[Complex64], phi: &[Complex64], gamma: f64) -> Vec<Complex64> {
    let mics = x.len();
    let mut e = vec![Complex64::new(0.0, 0.0); mics];
    state.residual_into(x, phi, &mut e);
    let v = state.sigma.mul_vec(phi);
    let s = gamma + dot_conj(phi, &v).re;
    let gain: Vec<Complex64> = v.iter().map(|vi| vi / s).collect();
    // Σ ← Σ − v vᴴ / s
    state.sigma.add_outer(&v, -1.0 / s);
    state.sigma.symmetrize();
    let data = state.mu.as_mut_slice();
    for (i, k) in gain.iter().enumerate() {
        for m in 0..mics {
            data[i * mics + m] += k * e[m].conj();
        }
    }
    e
}

/// `λ_i = mean_m |μ_m[i] − μ_m,prev[i]|² + ε`.
pub fn update_innovation_cov(state: &mut KalmanBinState, epsilon: f64) {
    let mics = state.mics();
    let cur = state.mu.as_slice();
    let prev = state.prev_mu.as_slice();
    for (i, l) in state.lambda.iter_mut().enumerate() {
        let mut s = 0.0;
        for m in 0..mics {
            s += (cur[i * mics + m] - prev[i * mics + m]).norm_sqr();
        }
        *l = s / mics as f64 + epsilon;
    }
}

/// `w_{n−1}ᴴ (x − μ_{n−1}ᴴ φ)` from the previous frame's filters.
pub fn a_priori_desired(state: &KalmanBinState, x: &[Complex64], phi: &[Complex64]) -> Complex64 {
    let mut d = vec![Complex64::new(0.0, 0.0); x.len()];
    state.residual_into(x, phi, &mut d);
    dot_conj(&state.w, &d)
}

/// Recursive RTF update, applied only when the mean early-to-late energy
/// ratio over mics exceeds `gate`. Returns whether the RTF was updated.
pub fn update_rtf_gated(state: &mut KalmanBinState, d: &[Complex64], r: &[Complex64], alpha: f64, gate: f64) -> bool {
    let ed: f64 = d.iter().map(|z| z.norm_sqr()).sum::<f64>() / d.len() as f64;
    let er: f64 = r.iter().map(|z| z.norm_sqr()).sum::<f64>() / r.len() as f64;
    if !(ed > gate * (er + f64::MIN_POSITIVE)) {
        return false;
    }
    state.r_dd.recursive_update(d, alpha, 1.0);
    match rtf_from_covariance(&state.r_dd, state.reference_mic) {
        Some(a) => {
            state.a = a;
            true
        }
        None => false,
    }
}

/// `R_rr ← (1 − α) R_rr + α γ⁻¹ r rᴴ`.
pub fn update_reverb_cov(state: &mut KalmanBinState, r: &[Complex64], gamma: f64, alpha: f64) {
    state.r_rr.recursive_update(r, alpha, 1.0 / gamma);
}

/// MVDR refresh from the current `R_rr` and `a`.
pub fn online_mvdr(state: &mut KalmanBinState, ridge: Ridge) -> crate::Result<()> {
    state.w = mvdr_weights(&state.r_rr, &state.a, ridge)?;
    Ok(())
}
