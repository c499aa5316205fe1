use std::f64::consts::PI;

use num_complex::Complex64;
use realfft::RealFftPlanner;

use crate::metrics::peak_index;
use crate::numerics::{dot_conj, hermitian_solve_vec, HermitianMatrix, Ridge};
use crate::rir_sim::{distance, ArrayGeometry, Position};
use crate::{Error, Result};

/// RTF estimate for one bin.
#[derive(Clone, Debug, PartialEq)]
pub struct RtfEstimate {
    pub a: Vec<Complex64>,
    /// The reference channel carried no energy; `a` is the fallback.
    pub reference_silent: bool,
}

/// `a = R e_ref / (e_refᴴ R e_ref)` with `a[ref] = 1` exactly, or `None`
/// when the reference power is negligible.
pub fn rtf_from_covariance(r: &HermitianMatrix, reference: usize) -> Option<Vec<Complex64>> {
    let r_ref = r.get(reference, reference).re;
    if !(r_ref > 1e-12 * r.trace()) || !(r_ref > 0.0) {
        return None;
    }
    let mut a: Vec<Complex64> = (0..r.dim()).map(|m| r.get(m, reference) / r_ref).collect();
    a[reference] = Complex64::new(1.0, 0.0);
    Some(a)
}

/// RTF from the unweighted covariance of `frames` (frame-major `[n][m]`).
///
/// Falls back to `fallback`, or to all ones, when the reference is silent.
pub fn estimate_rtf(frames: &[Complex64], mics: usize, reference: usize, fallback: Option<&[Complex64]>) -> RtfEstimate {
    let mut r = HermitianMatrix::zeros(mics);
    for d in frames.chunks_exact(mics) {
        r.add_outer_upper(d, 1.0);
    }
    r.mirror_upper();
    match rtf_from_covariance(&r, reference) {
        Some(a) => RtfEstimate {
            a,
            reference_silent: false,
        },
        None => RtfEstimate {
            a: fallback.map(<[_]>::to_vec).unwrap_or_else(|| vec![Complex64::new(1.0, 0.0); mics]),
            reference_silent: true,
        },
    }
}

/// `w = R⁻¹a / (aᴴR⁻¹a)`, scaled so that `wᴴa = 1` holds to rounding.
///
/// A zero covariance is treated as spatially white.
pub fn mvdr_weights(r_noise: &HermitianMatrix, a: &[Complex64], ridge: Ridge) -> Result<Vec<Complex64>> {
    if a.len() != r_noise.dim() {
        return Err(Error::ShapeMismatch(format!(
            "RTF has {} entries, covariance is {}×{}",
            a.len(),
            r_noise.dim(),
            r_noise.dim()
        )));
    }
    let y = if r_noise.trace() > 0.0 {
        hermitian_solve_vec(r_noise, a, ridge.value_for(r_noise))?
    } else {
        a.to_vec()
    };
    let t = dot_conj(&y, a);
    if !(t.norm() > 0.0) || !t.re.is_finite() {
        return Err(Error::Singular { condition: f64::INFINITY });
    }
    // wᴴa = yᴴa / t = 1
    let scale = t.conj().inv();
    Ok(y.iter().map(|v| v * scale).collect())
}

/// `|wᴴa − 1|`.
pub fn distortion_error(w: &[Complex64], a: &[Complex64]) -> f64 {
    (dot_conj(w, a) - 1.0).norm()
}

/// A-priori RTFs from measured RIRs, one `M`-vector per bin.
///
/// Each RIR is cut from 40 samples before the earliest direct-path peak
/// (the interpolation kernel's pre-ringing) to `early_ms` after the
/// reference peak, transformed with a `fft_size`-point DFT and divided by
/// the reference spectrum.
pub fn rtf_from_rir(rirs: &[Vec<f64>], reference: usize, sample_rate: u32, fft_size: usize, early_ms: f64) -> Result<Vec<Vec<Complex64>>> {
    if rirs.is_empty() || reference >= rirs.len() {
        return Err(Error::ShapeMismatch("reference mic outside RIR set".into()));
    }
    let peaks: Vec<usize> = rirs.iter().map(|h| peak_index(h)).collect();
    let start = peaks.iter().min().copied().unwrap_or(0).saturating_sub(40);
    let end = peaks[reference] + (early_ms * 1e-3 * sample_rate as f64).round() as usize + 1;
    let end = end.min(start + fft_size);
    let fft = RealFftPlanner::<f64>::new().plan_fft_forward(fft_size);
    let spectra: Vec<Vec<Complex64>> = rirs
        .iter()
        .map(|h| {
            let mut buf = fft.make_input_vec();
            for (t, v) in (start..end.min(h.len())).zip(buf.iter_mut()) {
                *v = h[t];
            }
            let mut out = fft.make_output_vec();
            fft.process(&mut buf, &mut out).expect("plan sizes");
            out
        })
        .collect();
    let href = &spectra[reference];
    let peak_power = href.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
    if !(peak_power > 0.0) {
        return Err(Error::ZeroResponse);
    }
    let eps = 1e-12 * peak_power;
    Ok((0..href.len())
        .map(|k| {
            let den = href[k].norm_sqr() + eps;
            let mut a: Vec<Complex64> = spectra.iter().map(|s| s[k] * href[k].conj() / den).collect();
            a[reference] = Complex64::new(1.0, 0.0);
            a
        })
        .collect())
}

/// Far-field free-field steering vector toward `direction` (pointing from
/// the array centre to the source), normalised to the reference mic.
pub fn free_field_rtf(array: &ArrayGeometry, direction: Position, frequency: f64, sound_speed: f64, reference: usize) -> Vec<Complex64> {
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let u = [direction[0] / norm, direction[1] / norm, direction[2] / norm];
    let c = array.center();
    let omega = 2.0 * PI * frequency;
    // mics closer to the source hear it earlier
    let delay = |p: &Position| -((p[0] - c[0]) * u[0] + (p[1] - c[1]) * u[1] + (p[2] - c[2]) * u[2]) / sound_speed;
    let tref = delay(&array.mics[reference]);
    array
        .mics
        .iter()
        .map(|p| Complex64::from_polar(1.0, -omega * (delay(p) - tref)))
        .collect()
}

/// Spherically diffuse coherence `Γ_ij = sin(ωd_ij/c) / (ωd_ij/c)`.
pub fn diffuse_coherence(array: &ArrayGeometry, frequency: f64, sound_speed: f64) -> HermitianMatrix {
    let m = array.len();
    let mut g = HermitianMatrix::identity(m);
    let omega = 2.0 * PI * frequency;
    let mut entries = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            let x = omega * distance(&array.mics[i], &array.mics[j]) / sound_speed;
            let v = if x.abs() < 1e-12 { 1.0 } else { x.sin() / x };
            entries.push(Complex64::new(v, 0.0));
        }
    }
    if let Ok(h) = HermitianMatrix::from_matrix(crate::numerics::CMatrix::from_row_major(m, m, entries).expect("square")) {
        g = h;
    }
    g
}
