//! Schroeder backward integration and reverberation-time fits.

use crate::{Error, Result};

/// Energy decay curve in dB, normalised so that `edc[0] = 0`.
///
/// Samples after the last nonzero tap are `-inf`.
pub fn schroeder_edc(rir: &[f64]) -> Result<Vec<f64>> {
    let mut tail = vec![0.0; rir.len()];
    let mut acc = 0.0;
    for i in (0..rir.len()).rev() {
        acc += rir[i] * rir[i];
        tail[i] = acc;
    }
    let total = tail.first().copied().unwrap_or(0.0);
    if !(total > 0.0) {
        return Err(Error::ZeroResponse);
    }
    // backward sums can wobble by an ulp; keep the curve monotone
    let mut prev = f64::INFINITY;
    Ok(tail
        .into_iter()
        .map(|e| {
            let db = if e > 0.0 { 10.0 * (e / total).log10() } else { f64::NEG_INFINITY };
            prev = db.min(prev).min(0.0);
            prev
        })
        .collect())
}

/// RT60 from a least-squares line through the EDC between `upper_db` and
/// `lower_db`, extrapolated to -60 dB.
pub fn rt60_from_edc_range(edc: &[f64], sample_rate: u32, upper_db: f64, lower_db: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = edc
        .iter()
        .enumerate()
        .filter(|(_, &v)| v <= upper_db && v >= lower_db)
        .map(|(i, &v)| (i as f64 / sample_rate as f64, v))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: pts.len(),
        });
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mv = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - mv)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let slope = sxy / sxx;
    if !(slope < 0.0) {
        return Err(Error::ZeroResponse);
    }
    Ok(-60.0 / slope)
}

/// RT60 fitted over the -5 to -25 dB span.
pub fn rt60_from_edc(edc: &[f64], sample_rate: u32) -> Result<f64> {
    rt60_from_edc_range(edc, sample_rate, -5.0, -25.0)
}

/// EDC value `offset` samples after the strongest tap.
pub fn edc_after_peak(rir: &[f64], offset: usize) -> Result<f64> {
    let edc = schroeder_edc(rir)?;
    let peak = peak_index(rir);
    Ok(edc.get(peak + offset).copied().unwrap_or(f64::NEG_INFINITY))
}

pub fn peak_index(x: &[f64]) -> usize {
    x.iter()
        .enumerate()
        .fold((0, -1.0), |(bi, bv), (i, &v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) })
        .0
}
