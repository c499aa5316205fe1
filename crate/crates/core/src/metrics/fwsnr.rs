use std::sync::Arc;

use realfft::{RealFftPlanner, RealToComplex};

use super::track::{segment_count, MetricTrack, TRACK_HOP, TRACK_WINDOW};
use super::{check_pair, ACTIVE_RANGE_DB};
use crate::stft::hann;
use crate::{Error, Result};

pub const FWSNR_BANDS: usize = 25;
pub const FWSNR_MIN_DB: f64 = -10.0;
pub const FWSNR_MAX_DB: f64 = 35.0;
const WEIGHT_EXPONENT: f64 = 0.2;
const LOW_HZ: f64 = 50.0;
const HIGH_HZ: f64 = 8000.0;

fn mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn inv_mel(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filters, `[band][bin]`.
pub fn mel_bank(bands: usize, fft_size: usize, sample_rate: u32) -> Vec<Vec<f64>> {
    let nyq = sample_rate as f64 / 2.0;
    let (lo, hi) = (mel(LOW_HZ), mel(HIGH_HZ.min(nyq)));
    let edges: Vec<f64> = (0..bands + 2)
        .map(|i| inv_mel(lo + (hi - lo) * i as f64 / (bands + 1) as f64))
        .collect();
    let bins = fft_size / 2 + 1;
    (0..bands)
        .map(|b| {
            let (l, c, r) = (edges[b], edges[b + 1], edges[b + 2]);
            (0..bins)
                .map(|k| {
                    let f = k as f64 * sample_rate as f64 / fft_size as f64;
                    if f <= l || f >= r {
                        0.0
                    } else if f <= c {
                        (f - l) / (c - l)
                    } else {
                        (r - f) / (r - c)
                    }
                })
                .collect()
        })
        .collect()
}

struct SegmentAnalyzer {
    window: Vec<f64>,
    fft: Arc<dyn RealToComplex<f64>>,
    bank: Vec<Vec<f64>>,
}

impl SegmentAnalyzer {
    fn new(win: usize, sample_rate: u32) -> Self {
        let fft_size = win.next_power_of_two();
        Self {
            window: hann(win),
            fft: RealFftPlanner::new().plan_fft_forward(fft_size),
            bank: mel_bank(FWSNR_BANDS, fft_size, sample_rate),
        }
    }

    /// Band magnitudes of a segment whose magnitude spectrum is normalised
    /// to unit sum; `None` for an all-zero segment.
    fn bands(&self, seg: &[f64]) -> Vec<f64> {
        let mut buf = self.fft.make_input_vec();
        for ((b, s), w) in buf.iter_mut().zip(seg).zip(&self.window) {
            *b = s * w;
        }
        let mut spec = self.fft.make_output_vec();
        self.fft.process(&mut buf, &mut spec).expect("plan sizes");
        let mag: Vec<f64> = spec.iter().map(|z| z.norm()).collect();
        let total: f64 = mag.iter().sum();
        let scale = if total > 0.0 { 1.0 / total } else { 0.0 };
        self.bank
            .iter()
            .map(|f| f.iter().zip(&mag).map(|(w, m)| w * m).sum::<f64>() * scale)
            .collect()
    }
}

/// Frequency-weighted segmental SNR of `test` against `reference`.
///
/// Per 25 ms segment (10 ms hop, Hann window) the magnitude spectra of
/// both signals are normalised to unit sum and pooled into 25 mel bands
/// over 50–8000 Hz. Band SNRs `10 log10(R² / (R − T)²)` are clipped to
/// [-10, 35] dB and averaged with weights `R^0.2`. Segments within 40 dB of
/// the loudest reference segment are active; the returned mean covers those.
pub fn fwsnr(reference: &[f64], test: &[f64], sample_rate: u32) -> Result<(f64, MetricTrack)> {
    check_pair(reference, test)?;
    let fs = sample_rate as f64;
    let win = (TRACK_WINDOW * fs).round() as usize;
    let hop = (TRACK_HOP * fs).round() as usize;
    let count = segment_count(reference.len(), win, hop);
    let active = active_segments(reference, win, hop);
    let an = SegmentAnalyzer::new(win, sample_rate);
    let mut raw = Vec::with_capacity(count);
    for i in 0..count {
        let r = an.bands(&reference[i * hop..i * hop + win]);
        let t = an.bands(&test[i * hop..i * hop + win]);
        let (mut num, mut den) = (0.0, 0.0);
        for (rb, tb) in r.iter().zip(&t) {
            let err = (rb - tb).powi(2);
            let snr = if *rb == 0.0 {
                FWSNR_MIN_DB
            } else if err == 0.0 {
                FWSNR_MAX_DB
            } else {
                (10.0 * (rb * rb / err).log10()).clamp(FWSNR_MIN_DB, FWSNR_MAX_DB)
            };
            let w = rb.powf(WEIGHT_EXPONENT);
            num += w * snr;
            den += w;
        }
        raw.push(if den > 0.0 { num / den } else { FWSNR_MIN_DB });
    }
    let track = MetricTrack::new(raw, active, sample_rate, hop, win);
    let mean = track.active_mean().ok_or(Error::NoActiveSegments)?;
    Ok((mean, track))
}

/// Segments whose reference energy is within 40 dB of the loudest one.
pub fn active_segments(reference: &[f64], win: usize, hop: usize) -> Vec<bool> {
    let count = segment_count(reference.len(), win, hop);
    let energies: Vec<f64> = (0..count)
        .map(|i| reference[i * hop..i * hop + win].iter().map(|v| v * v).sum())
        .collect();
    let peak = energies.iter().cloned().fold(0.0, f64::max);
    let threshold = peak * 10f64.powf(-ACTIVE_RANGE_DB / 10.0);
    energies.iter().map(|&e| peak > 0.0 && e >= threshold).collect()
}
