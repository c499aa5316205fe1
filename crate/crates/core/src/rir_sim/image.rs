//! Image-source impulse responses with windowed-sinc fractional delays.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rayon::prelude::*;

use super::{distance, ArrayGeometry, Position, Room};
use crate::Result;

/// Length of the fractional-delay interpolation kernel.
pub const SINC_TAPS: usize = 81;
const HALF: usize = SINC_TAPS / 2;
const STEPS: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RirOptions {
    /// RIR length in samples; `None` uses `rt60 · fs`.
    pub max_length: Option<usize>,
    /// Maximum number of wall reflections per image; `None` is unbounded.
    pub max_order: Option<u32>,
    /// Cutoff of the DC-removing high-pass filter, if any.
    pub high_pass_hz: Option<f64>,
}

impl Default for RirOptions {
    fn default() -> Self {
        Self {
            max_length: None,
            max_order: None,
            high_pass_hz: Some(DEFAULT_HIGH_PASS_HZ),
        }
    }
}

pub const DEFAULT_HIGH_PASS_HZ: f64 = 100.0;

/// Allen and Berkley's second-order DC blocker, applied in place. The first
/// output sample equals the first input sample.
fn high_pass(h: &mut [f64], cutoff_hz: f64, sample_rate: u32) {
    let w = 2.0 * PI * cutoff_hz / sample_rate as f64;
    let r1 = (-w).exp();
    let b1 = 2.0 * r1 * w.cos();
    let b2 = -r1 * r1;
    let a1 = -(1.0 + r1);
    let (mut y1, mut y2) = (0.0, 0.0);
    for v in h.iter_mut() {
        let y0 = b1 * y1 + b2 * y2 + *v;
        *v = y0 + a1 * y1 + r1 * y2;
        y2 = y1;
        y1 = y0;
    }
}

/// Hann-windowed sinc sampled at `i - r/STEPS` for `i ∈ [-HALF, HALF]`,
/// one row per fractional step `r ∈ [0, STEPS]`.
fn kernel_table() -> &'static [[f64; SINC_TAPS]] {
    static TABLE: OnceLock<Vec<[f64; SINC_TAPS]>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let width = (HALF + 1) as f64;
        (0..=STEPS)
            .map(|r| {
                let frac = r as f64 / STEPS as f64;
                let mut row = [0.0; SINC_TAPS];
                for (j, v) in row.iter_mut().enumerate() {
                    let x = j as f64 - HALF as f64 - frac;
                    let sinc = if x == 0.0 { 1.0 } else { (PI * x).sin() / (PI * x) };
                    let w = if x.abs() < width {
                        0.5 * (1.0 + (PI * x / width).cos())
                    } else {
                        0.0
                    };
                    *v = w * sinc;
                }
                row
            })
            .collect()
    })
}

/// Adds `gain · δ(t − delay)` band-limited by the interpolation kernel,
/// with the fractional delay rounded to the nearest table step.
fn add_tap(out: &mut [f64], delay: f64, gain: f64) {
    let table = kernel_table();
    let base = delay.floor();
    let r = ((delay - base) * STEPS as f64).round() as usize;
    let row = &table[r];
    let start = base as i64 - HALF as i64;
    let lo = (-start).max(0) as usize;
    let hi = ((out.len() as i64 - start).min(SINC_TAPS as i64)).max(0) as usize;
    if lo >= hi {
        return;
    }
    let dst = &mut out[(start + lo as i64) as usize..(start + hi as i64) as usize];
    for (o, k) in dst.iter_mut().zip(&row[lo..hi]) {
        *o += gain * k;
    }
}

/// Per-axis image offsets `(squared distance component, reflection count)`
/// within `reach` metres.
fn axis_images(src: f64, mic: f64, len: f64, reach: f64) -> Vec<(f64, u32)> {
    let n_max = (reach / (2.0 * len)).ceil() as i64 + 1;
    let mut out = Vec::new();
    for n in -n_max..=n_max {
        for u in 0..2i64 {
            let image = (1 - 2 * u) as f64 * src + 2.0 * n as f64 * len;
            let d = image - mic;
            if d.abs() <= reach {
                let refl = ((n - u).abs() + n.abs()) as u32;
                out.push((d * d, refl));
            }
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

/// Impulse response from `source` to `mic`.
///
/// Each image contributes `β^order / (4πd)` at delay `d·fs/c`.
pub fn image_rir(room: &Room, source: &Position, mic: &Position, options: &RirOptions) -> Result<Vec<f64>> {
    room.validate()?;
    room.check_inside(source, "source")?;
    room.check_inside(mic, "microphone")?;
    if distance(source, mic) == 0.0 {
        return Err(crate::Error::Geometry("source coincides with microphone".into()));
    }
    let len = options.max_length.unwrap_or_else(|| room.default_rir_length());
    let beta = room.reflection_coefficient()?;
    let fs_over_c = room.sample_rate as f64 / room.sound_speed;
    let reach = (len + HALF) as f64 / fs_over_c;
    let reach2 = reach * reach;
    let max_order = options.max_order.unwrap_or(u32::MAX);

    let axes: Vec<Vec<(f64, u32)>> = (0..3)
        .map(|i| axis_images(source[i], mic[i], room.dimensions[i], reach))
        .collect();
    let max_refl = axes.iter().map(|a| a.iter().map(|x| x.1).max().unwrap_or(0)).sum::<u32>();
    let beta_pow: Vec<f64> = (0..=max_refl).map(|k| beta.powi(k as i32)).collect();

    let mut out = vec![0.0; len];
    for &(dx2, rx) in &axes[0] {
        if dx2 > reach2 {
            break;
        }
        if rx > max_order {
            continue;
        }
        for &(dy2, ry) in &axes[1] {
            let dxy2 = dx2 + dy2;
            if dxy2 > reach2 {
                break;
            }
            if rx + ry > max_order {
                continue;
            }
            for &(dz2, rz) in &axes[2] {
                let d2 = dxy2 + dz2;
                if d2 > reach2 {
                    break;
                }
                let order = rx + ry + rz;
                if order > max_order {
                    continue;
                }
                let gain = beta_pow[order as usize];
                if gain == 0.0 {
                    continue;
                }
                let d = d2.sqrt();
                add_tap(&mut out, d * fs_over_c, gain / (4.0 * PI * d));
            }
        }
    }
    if let Some(fc) = options.high_pass_hz {
        high_pass(&mut out, fc, room.sample_rate);
    }
    Ok(out)
}

/// RIRs from `source` to every mic of `array`.
pub fn image_rirs(room: &Room, source: &Position, array: &ArrayGeometry, options: &RirOptions) -> Result<Vec<Vec<f64>>> {
    array
        .mics
        .par_iter()
        .map(|mic| image_rir(room, source, mic, options))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_interpolating() {
        let t = kernel_table();
        for (j, v) in t[0].iter().enumerate() {
            let expect = if j == HALF { 1.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-15);
        }
        // a full step is the same kernel shifted by one sample
        for j in 1..SINC_TAPS {
            assert!((t[STEPS][j] - t[0][j - 1]).abs() < 1e-12);
        }
    }

    #[test]
    fn fractional_tap_preserves_dc_gain() {
        let mut out = vec![0.0; 300];
        add_tap(&mut out, 150.37, 2.0);
        let sum: f64 = out.iter().sum();
        assert!((sum - 2.0).abs() < 0.01, "{sum}");
        let peak = out.iter().cloned().fold(0.0, f64::max);
        assert_eq!(out.iter().position(|&v| v == peak), Some(150));
    }

    #[test]
    fn high_pass_removes_dc() {
        let mut h = vec![1.0; 16000];
        high_pass(&mut h, 100.0, 16000);
        assert_eq!(h[0], 1.0);
        assert!(h[8000..].iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn taps_near_edges_are_clipped() {
        let mut out = vec![0.0; 50];
        add_tap(&mut out, 2.5, 1.0);
        add_tap(&mut out, 48.5, 1.0);
        add_tap(&mut out, 500.0, 1.0);
        assert!(out.iter().all(|v| v.is_finite()));
    }
}
