//! Convolution of source signals with simulated room responses.

use std::sync::Arc;

use rayon::prelude::*;
use realfft::RealFftPlanner;

use super::{image_rir, ArrayGeometry, Position, Room, RirOptions, Scene, Trajectory};
use crate::{Error, Result};

/// RIR update interval for moving sources, in seconds.
pub const MOVING_RIR_HOP: f64 = 0.005;

/// Linear convolution of `signal` with `h`, truncated to the signal length.
pub fn convolve(signal: &[f64], h: &[f64]) -> Vec<f64> {
    let n = signal.len();
    if n == 0 || h.is_empty() {
        return vec![0.0; n];
    }
    let size = (n + h.len() - 1).next_power_of_two();
    let mut planner = RealFftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut a = fwd.make_input_vec();
    a[..n].copy_from_slice(signal);
    let mut b = fwd.make_input_vec();
    b[..h.len()].copy_from_slice(h);
    let mut sa = fwd.make_output_vec();
    let mut sb = fwd.make_output_vec();
    fwd.process(&mut a, &mut sa).expect("plan sizes");
    fwd.process(&mut b, &mut sb).expect("plan sizes");
    for (x, y) in sa.iter_mut().zip(&sb) {
        *x *= y;
    }
    sa[0].im = 0.0;
    let last = sa.len() - 1;
    sa[last].im = 0.0;
    let mut out = inv.make_output_vec();
    inv.process(&mut sa, &mut out).expect("plan sizes");
    let scale = 1.0 / size as f64;
    out.truncate(n);
    out.iter_mut().for_each(|v| *v *= scale);
    out
}

fn check_rate(room: &Room, rate: u32) -> Result<()> {
    if room.sample_rate != rate {
        return Err(Error::SampleRateMismatch {
            scene: room.sample_rate,
            signal: rate,
        });
    }
    Ok(())
}

/// Per-source array images, indexed `[source][mic][sample]`.
pub fn source_images(scene: &Scene, signals: &[Vec<f64>], sample_rate: u32) -> Result<Vec<Vec<Vec<f64>>>> {
    check_rate(&scene.room, sample_rate)?;
    if signals.len() != scene.sources.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} signals for {} sources",
            signals.len(),
            scene.sources.len()
        )));
    }
    let rirs = scene.rirs()?;
    Ok(rirs
        .iter()
        .zip(signals)
        .map(|(per_mic, s)| per_mic.par_iter().map(|h| convolve(s, h)).collect())
        .collect())
}

/// Mixture at every mic: `x_m = Σ_s h_{m,s} ⊛ s_s`, truncated to the
/// longest source signal.
pub fn render_static(scene: &Scene, signals: &[Vec<f64>], sample_rate: u32) -> Result<Vec<Vec<f64>>> {
    let len = signals.iter().map(Vec::len).max().unwrap_or(0);
    let images = source_images(scene, signals, sample_rate)?;
    let mut out = vec![vec![0.0; len]; scene.array.len()];
    for per_mic in &images {
        for (acc, y) in out.iter_mut().zip(per_mic) {
            for (a, v) in acc.iter_mut().zip(y) {
                *a += v;
            }
        }
    }
    Ok(out)
}

/// Gain applied to the interferer so that the two images meet `sir_db`
/// at the reference mic.
pub fn sir_gain(desired_ref: &[f64], interferer_ref: &[f64], sir_db: f64) -> f64 {
    let ed: f64 = desired_ref.iter().map(|v| v * v).sum();
    let ei: f64 = interferer_ref.iter().map(|v| v * v).sum();
    if ei == 0.0 {
        return 0.0;
    }
    (ed / ei / 10f64.powf(sir_db / 10.0)).sqrt()
}

/// Output sample `t` of `h ⊛ s`, with `rev` the time-reversed signal.
#[inline]
fn conv_at(h: &[f64], rev: &[f64], t: usize) -> f64 {
    let n = rev.len();
    let taps = h.len().min(t + 1);
    let start = n - 1 - t;
    let src = &rev[start..start + taps];
    let mut acc = [0.0f64; 4];
    let hc = h[..taps].chunks_exact(4);
    let sc = src.chunks_exact(4);
    let (hr, sr) = (hc.remainder(), sc.remainder());
    for (a, b) in hc.zip(sc) {
        acc[0] += a[0] * b[0];
        acc[1] += a[1] * b[1];
        acc[2] += a[2] * b[2];
        acc[3] += a[3] * b[3];
    }
    let mut sum = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (a, b) in hr.iter().zip(sr) {
        sum += a * b;
    }
    sum
}

/// Renders a source following `trajectory`.
///
/// The RIR is recomputed every `rir_hop` seconds at the interpolated
/// position. Within hop `j` the output fades linearly from the signal
/// convolved with RIR `j` to the signal convolved with RIR `j + 1`.
/// Consecutive identical positions reuse the previous RIR.
pub fn render_moving(
    room: &Room,
    array: &ArrayGeometry,
    trajectory: &Trajectory,
    signal: &[f64],
    sample_rate: u32,
    rir_hop: f64,
    options: &RirOptions,
) -> Result<Vec<Vec<f64>>> {
    check_rate(room, sample_rate)?;
    room.validate()?;
    array.check_inside(room)?;
    let fs = sample_rate as f64;
    let hop = (rir_hop * fs).round() as usize;
    if hop == 0 {
        return Err(Error::Config(format!("rir hop {rir_hop} s is below one sample")));
    }
    let len = signal.len();
    let duration = len as f64 / fs;
    if trajectory.start() > 0.0 || trajectory.end() + 1e-9 < duration {
        return Err(Error::TrajectoryUnderrun {
            available: trajectory.end() - trajectory.start().max(0.0),
            needed: duration,
        });
    }
    let segments = len.div_ceil(hop);
    let positions: Vec<_> = (0..=segments)
        .map(|j| trajectory.position_at(((j * hop) as f64 / fs).min(trajectory.end())))
        .collect();
    for (j, p) in positions.iter().enumerate() {
        room.check_inside(p, &format!("source at {:.3} s", (j * hop) as f64 / fs))?;
    }
    let rev: Vec<f64> = signal.iter().rev().copied().collect();

    array
        .mics
        .par_iter()
        .map(|mic| {
            let rir = |p: &Position| -> Result<Arc<Vec<f64>>> {
                let mut h = image_rir(room, p, mic, options)?;
                // drop the negligible tail, e.g. of a direct-path-only response
                let peak = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let used = h.iter().rposition(|v| v.abs() > 1e-12 * peak).map_or(0, |i| i + 1);
                h.truncate(used);
                Ok(Arc::new(h))
            };
            let mut out = vec![0.0; len];
            let mut cur = rir(&positions[0])?;
            for j in 0..segments {
                let next = if positions[j + 1] == positions[j] {
                    Arc::clone(&cur)
                } else {
                    rir(&positions[j + 1])?
                };
                let same = Arc::ptr_eq(&cur, &next);
                let t0 = j * hop;
                for t in t0..(t0 + hop).min(len) {
                    let y0 = conv_at(&cur, &rev, t);
                    out[t] = if same {
                        y0
                    } else {
                        let lambda = (t - t0) as f64 / hop as f64;
                        (1.0 - lambda) * y0 + lambda * conv_at(&next, &rev, t)
                    };
                }
                cur = next;
            }
            Ok(out)
        })
        .collect()
}
