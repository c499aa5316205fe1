use super::fwsnr::active_segments;
use super::track::{segment_count, MetricTrack, TRACK_HOP, TRACK_WINDOW};
use super::check_pair;
use crate::numerics::levinson_durbin;
use crate::stft::hann;
use crate::{Error, Result};

pub const LLR_ORDER: usize = 16;

/// White-noise correction: `r[0]` is raised by this fraction before the
/// LPC fit, a −60 dB floor that bounds the conditioning of order-16 fits
/// on strongly resonant segments.
pub const LLR_NOISE_CORRECTION: f64 = 1e-6;

fn autocorrelation(x: &[f64], order: usize) -> Vec<f64> {
    let mut r: Vec<f64> = (0..=order)
        .map(|lag| x[lag..].iter().zip(x).map(|(a, b)| a * b).sum())
        .collect();
    r[0] *= 1.0 + LLR_NOISE_CORRECTION;
    r
}

/// LPC polynomial `[1, −a_1, …, −a_Q]` of a windowed segment.
fn lpc_polynomial(r: &[f64]) -> Option<Vec<f64>> {
    let model = levinson_durbin(r).ok()?;
    let mut a = Vec::with_capacity(r.len());
    a.push(1.0);
    a.extend(model.coefficients.iter().map(|c| -c));
    Some(a)
}

/// `aᵀ R a` with `R` the Toeplitz matrix of `r`.
fn toeplitz_form(a: &[f64], r: &[f64]) -> f64 {
    let mut s = 0.0;
    for (i, ai) in a.iter().enumerate() {
        for (j, aj) in a.iter().enumerate() {
            s += ai * aj * r[i.abs_diff(j)];
        }
    }
    s
}

/// Log-likelihood ratio between order-16 LPC models of `test` and
/// `reference` segments, `log(a_t R_r a_tᵀ / a_r R_r a_rᵀ)`, floored at 0.
/// Both autocorrelations carry the [`LLR_NOISE_CORRECTION`].
/// Lower is better; segments where either LPC fit fails are inactive.
pub fn llr(reference: &[f64], test: &[f64], sample_rate: u32) -> Result<(f64, MetricTrack)> {
    check_pair(reference, test)?;
    let fs = sample_rate as f64;
    let win = (TRACK_WINDOW * fs).round() as usize;
    let hop = (TRACK_HOP * fs).round() as usize;
    let count = segment_count(reference.len(), win, hop);
    let mut active = active_segments(reference, win, hop);
    let window = hann(win);
    let mut raw = Vec::with_capacity(count);
    let mut rseg = vec![0.0; win];
    let mut tseg = vec![0.0; win];
    for i in 0..count {
        for j in 0..win {
            rseg[j] = reference[i * hop + j] * window[j];
            tseg[j] = test[i * hop + j] * window[j];
        }
        let rr = autocorrelation(&rseg, LLR_ORDER);
        let rt = autocorrelation(&tseg, LLR_ORDER);
        let value = match (lpc_polynomial(&rr), lpc_polynomial(&rt)) {
            (Some(ar), Some(at)) => {
                let num = toeplitz_form(&at, &rr);
                let den = toeplitz_form(&ar, &rr);
                if den > 0.0 && num > 0.0 {
                    Some((num / den).ln().max(0.0))
                } else {
                    None
                }
            }
            _ => None,
        };
        match value {
            Some(v) => raw.push(v),
            None => {
                raw.push(0.0);
                active[i] = false;
            }
        }
    }
    let track = MetricTrack::new(raw, active, sample_rate, hop, win);
    let mean = track.active_mean().ok_or(Error::NoActiveSegments)?;
    Ok((mean, track))
}
