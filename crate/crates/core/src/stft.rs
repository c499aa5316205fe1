//! Multichannel STFT analysis and weighted overlap-add synthesis.
//!
//! Frames use a periodic Hann window; frame `n` covers samples
//! `[n·hop, n·hop + window_len)` and the last frame is zero padded. Only the
//! `K/2 + 1` non-negative frequency bins are stored.

use std::f64::consts::PI;
use num_complex::Complex64;
use realfft::RealFftPlanner;

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StftConfig {
    pub sample_rate: u32,
    pub window_len: usize,
    pub hop: usize,
    pub fft_size: usize,
}

impl Default for StftConfig {
    /// 32 ms Hann window at 16 kHz with 75 % overlap.
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            window_len: 512,
            hop: 128,
            fft_size: 512,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 || self.hop == 0 {
            return Err(Error::Config("window length and hop must be positive".into()));
        }
        if self.window_len % self.hop != 0 {
            return Err(Error::Config(format!(
                "hop {} does not divide window length {}",
                self.hop, self.window_len
            )));
        }
        if self.fft_size < self.window_len || self.fft_size % 2 != 0 {
            return Err(Error::Config(format!(
                "fft size {} must be even and at least the window length {}",
                self.fft_size, self.window_len
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frames produced for a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        if len <= self.window_len {
            1
        } else {
            1 + (len - self.window_len).div_ceil(self.hop)
        }
    }

    pub fn window(&self) -> Vec<f64> {
        hann(self.window_len)
    }

    pub fn frame_seconds(&self, n: usize) -> f64 {
        (n * self.hop) as f64 / self.sample_rate as f64
    }

    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.sample_rate as f64 / self.fft_size as f64
    }
}

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / len as f64).cos())
        .collect()
}

/// Complex spectrogram stack indexed `[frame][bin][mic]`, mic innermost.
#[derive(Clone, Debug, PartialEq)]
pub struct StftTensor {
    config: StftConfig,
    frames: usize,
    bins: usize,
    mics: usize,
    signal_len: usize,
    data: Vec<Complex64>,
}

impl StftTensor {
    pub fn zeros(config: StftConfig, frames: usize, mics: usize, signal_len: usize) -> Self {
        let bins = config.bins();
        Self {
            config,
            frames,
            bins,
            mics,
            signal_len,
            data: vec![Complex64::new(0.0, 0.0); frames * bins * mics],
        }
    }

    /// Zero tensor with the same framing and `mics` channels.
    pub fn zeros_like(&self, mics: usize) -> Self {
        Self::zeros(self.config, self.frames, mics, self.signal_len)
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn mics(&self) -> usize {
        self.mics
    }

    /// Length of the time-domain signal this tensor was analyzed from.
    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    #[inline]
    fn offset(&self, n: usize, k: usize) -> usize {
        (n * self.bins + k) * self.mics
    }

    #[inline]
    pub fn get(&self, n: usize, k: usize, m: usize) -> Complex64 {
        self.data[self.offset(n, k) + m]
    }

    #[inline]
    pub fn set(&mut self, n: usize, k: usize, m: usize, v: Complex64) {
        let o = self.offset(n, k) + m;
        self.data[o] = v;
    }

    /// Observation vector `x[n, k]` across mics.
    #[inline]
    pub fn vector(&self, n: usize, k: usize) -> &[Complex64] {
        let o = self.offset(n, k);
        &self.data[o..o + self.mics]
    }

    #[inline]
    pub fn vector_mut(&mut self, n: usize, k: usize) -> &mut [Complex64] {
        let o = self.offset(n, k);
        &mut self.data[o..o + self.mics]
    }

    /// All bins and mics of frame `n`, bin-major.
    pub fn frame(&self, n: usize) -> &[Complex64] {
        let o = self.offset(n, 0);
        &self.data[o..o + self.bins * self.mics]
    }

    pub fn frame_mut(&mut self, n: usize) -> &mut [Complex64] {
        let o = self.offset(n, 0);
        let len = self.bins * self.mics;
        &mut self.data[o..o + len]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    /// Copy of bin `k` as a frame-major `[n][m]` series.
    pub fn bin_series(&self, k: usize) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.frames * self.mics);
        for n in 0..self.frames {
            out.extend_from_slice(self.vector(n, k));
        }
        out
    }

    /// Writes a frame-major `[n][m]` series into bin `k`.
    pub fn set_bin_series(&mut self, k: usize, series: &[Complex64]) {
        assert_eq!(series.len(), self.frames * self.mics);
        for n in 0..self.frames {
            let m = self.mics;
            self.vector_mut(n, k).copy_from_slice(&series[n * m..(n + 1) * m]);
        }
    }

    /// Single-channel tensor holding mic `m`.
    pub fn channel(&self, m: usize) -> StftTensor {
        assert!(m < self.mics);
        let mut out = self.zeros_like(1);
        for (dst, src) in out.data.iter_mut().zip(self.data.iter().skip(m).step_by(self.mics)) {
            *dst = *src;
        }
        out
    }

    /// Truncates to the first `frames` frames.
    pub fn prefix(&self, frames: usize) -> StftTensor {
        let frames = frames.min(self.frames);
        let len = frames * self.bins * self.mics;
        let signal_len = if frames == self.frames {
            self.signal_len
        } else {
            ((frames - 1) * self.config.hop + self.config.window_len).min(self.signal_len)
        };
        StftTensor {
            config: self.config,
            frames,
            bins: self.bins,
            mics: self.mics,
            signal_len,
            data: self.data[..len].to_vec(),
        }
    }

    pub fn scaled(&self, factor: f64) -> StftTensor {
        let mut out = self.clone();
        for z in &mut out.data {
            *z *= factor;
        }
        out
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    fn same_shape(&self, other: &StftTensor) -> bool {
        self.config == other.config
            && self.frames == other.frames
            && self.mics == other.mics
            && self.bins == other.bins
    }

    /// Element-wise `self + other`.
    pub fn add(&self, other: &StftTensor) -> Result<StftTensor> {
        if !self.same_shape(other) {
            return Err(Error::ShapeMismatch("tensors differ in shape".into()));
        }
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(out)
    }
}

/// Analyzes each channel of `signal` (channels × samples).
pub fn analyze(signal: &[Vec<f64>], config: &StftConfig) -> Result<StftTensor> {
    config.validate()?;
    let mics = signal.len();
    if mics == 0 {
        return Err(Error::InsufficientSamples {
            needed: config.window_len,
            got: 0,
        });
    }
    let len = signal[0].len();
    if signal.iter().any(|c| c.len() != len) {
        return Err(Error::ShapeMismatch("channels differ in length".into()));
    }
    if len < config.window_len {
        return Err(Error::InsufficientSamples {
            needed: config.window_len,
            got: len,
        });
    }
    let frames = config.frame_count(len);
    let window = config.window();
    let fft = RealFftPlanner::<f64>::new().plan_fft_forward(config.fft_size);
    let mut input = fft.make_input_vec();
    let mut spectrum = fft.make_output_vec();
    let mut scratch = fft.make_scratch_vec();
    let mut tensor = StftTensor::zeros(*config, frames, mics, len);
    for (m, channel) in signal.iter().enumerate() {
        for n in 0..frames {
            let start = n * config.hop;
            input.iter_mut().for_each(|v| *v = 0.0);
            let end = (start + config.window_len).min(len);
            for (i, t) in (start..end).enumerate() {
                input[i] = channel[t] * window[i];
            }
            fft.process_with_scratch(&mut input, &mut spectrum, &mut scratch)
                .expect("buffer sizes come from the plan");
            for (k, &z) in spectrum.iter().enumerate() {
                tensor.set(n, k, m, z);
            }
        }
    }
    Ok(tensor)
}

/// Single-channel convenience wrapper around [`analyze`].
pub fn analyze_mono(signal: &[f64], config: &StftConfig) -> Result<StftTensor> {
    analyze(&[signal.to_vec()], config)
}

/// Weighted overlap-add inverse of [`analyze`].
///
/// Each inverse frame is weighted by the analysis window and the sum is
/// divided by the accumulated squared window. In the interior that sum is
/// the constant COLA value, so this is the dual-window synthesis; near the
/// edges it uses whatever coverage exists.
pub fn synthesize(tensor: &StftTensor) -> Vec<Vec<f64>> {
    let config = tensor.config;
    let window = config.window();
    let len = tensor.signal_len;
    let span = (tensor.frames - 1) * config.hop + config.window_len;
    let ifft = RealFftPlanner::<f64>::new().plan_fft_inverse(config.fft_size);
    let mut spectrum = ifft.make_input_vec();
    let mut frame = ifft.make_output_vec();
    let mut scratch = ifft.make_scratch_vec();
    let scale = 1.0 / config.fft_size as f64;

    let mut norm = vec![0.0; span];
    for n in 0..tensor.frames {
        let start = n * config.hop;
        for (i, w) in window.iter().enumerate() {
            norm[start + i] += w * w;
        }
    }
    let interior = window.iter().map(|w| w * w).sum::<f64>() / (config.window_len / config.hop) as f64;
    let norm_floor = 1e-6 * interior;

    (0..tensor.mics)
        .map(|m| {
            let mut out = vec![0.0; span];
            for n in 0..tensor.frames {
                for (k, z) in spectrum.iter_mut().enumerate() {
                    *z = tensor.get(n, k, m);
                }
                // the real inverse needs purely real DC and Nyquist bins
                spectrum[0].im = 0.0;
                let last = spectrum.len() - 1;
                spectrum[last].im = 0.0;
                ifft.process_with_scratch(&mut spectrum, &mut frame, &mut scratch)
                    .expect("buffer sizes come from the plan");
                let start = n * config.hop;
                for i in 0..config.window_len {
                    out[start + i] += frame[i] * scale * window[i];
                }
            }
            for (y, &w) in out.iter_mut().zip(&norm) {
                *y = if w > norm_floor { *y / w } else { 0.0 };
            }
            out.truncate(len);
            out.resize(len, 0.0);
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn interior_snr(x: &[f64], y: &[f64], margin: usize) -> f64 {
        let (mut s, mut e) = (0.0, 0.0);
        for t in margin..x.len() - margin {
            s += x[t] * x[t];
            e += (x[t] - y[t]).powi(2);
        }
        10.0 * (s / e).log10()
    }

    #[test]
    fn default_framing() {
        let c = StftConfig::default();
        assert_eq!((c.window_len, c.hop, c.fft_size, c.sample_rate), (512, 128, 512, 16000));
        assert_eq!(c.bins(), 257);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_bad_config() {
        let c = StftConfig { hop: 100, ..Default::default() };
        assert!(c.validate().is_err());
        let c = StftConfig { fft_size: 256, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn too_short_signal() {
        let c = StftConfig::default();
        assert!(matches!(
            analyze(&[vec![0.0; 100]], &c),
            Err(Error::InsufficientSamples { .. })
        ));
        assert!(analyze(&[], &c).is_err());
    }

    #[test]
    fn zero_signal_gives_zero_tensor() {
        let t = analyze(&[vec![0.0; 4000]], &StftConfig::default()).unwrap();
        assert!(t.as_slice().iter().all(|z| z.norm() == 0.0));
        let y = synthesize(&t);
        assert!(y[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cola_sum_is_constant() {
        let c = StftConfig::default();
        let w = c.window();
        for t in 0..c.hop {
            let s: f64 = (0..c.window_len / c.hop).map(|j| w[t + j * c.hop].powi(2)).sum();
            assert!((s - 1.5).abs() < 1e-12, "{s}");
        }
    }

    #[test]
    fn bin_centred_sinusoid_concentrates_energy() {
        let c = StftConfig::default();
        let k0 = 40;
        let f = c.bin_frequency(k0);
        let x: Vec<f64> = (0..8000)
            .map(|t| (2.0 * PI * f * t as f64 / c.sample_rate as f64).cos())
            .collect();
        let tensor = analyze_mono(&x, &c).unwrap();
        for n in 2..tensor.frames() - 2 {
            let total: f64 = (0..tensor.bins()).map(|k| tensor.get(n, k, 0).norm_sqr()).sum();
            let main = tensor.get(n, k0, 0).norm_sqr();
            // Hann leakage only reaches k0 ± 1, at a quarter of the amplitude
            assert!(main / total >= 0.66 && main / total <= 0.67);
            let three: f64 = (k0 - 1..=k0 + 1).map(|k| tensor.get(n, k, 0).norm_sqr()).sum();
            assert!(three / total > 0.999);
        }
    }

    #[test]
    fn impulse_at_window_edge_and_centre() {
        let c = StftConfig::default();
        let mut x = vec![0.0; 2048];
        // frame 4 starts at sample 512; frame 2 is centred on it
        x[512] = 1.0;
        let t = analyze_mono(&x, &c).unwrap();
        for k in 0..t.bins() {
            assert!(t.get(4, k, 0).norm() < 1e-15);
            assert!((t.get(2, k, 0).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn round_trip_reconstructs_interior() {
        let c = StftConfig::default();
        let x = noise(12_000, 3);
        let y = synthesize(&analyze_mono(&x, &c).unwrap());
        assert_eq!(y[0].len(), x.len());
        assert!(interior_snr(&x, &y[0], c.window_len) > 200.0);
    }

    #[test]
    fn multichannel_round_trip() {
        let c = StftConfig::default();
        let x = vec![noise(5000, 1), noise(5000, 2), noise(5000, 9)];
        let t = analyze(&x, &c).unwrap();
        assert_eq!(t.mics(), 3);
        let y = synthesize(&t);
        for (a, b) in x.iter().zip(&y) {
            assert!(interior_snr(a, b, c.window_len) > 60.0);
        }
    }

    #[test]
    fn channel_extraction_matches_mono_analysis() {
        let c = StftConfig::default();
        let x = vec![noise(3000, 4), noise(3000, 5)];
        let t = analyze(&x, &c).unwrap();
        assert_eq!(t.channel(1), analyze_mono(&x[1], &c).unwrap());
    }

    #[test]
    fn bin_series_round_trip() {
        let c = StftConfig::default();
        let t = analyze(&[noise(2000, 6), noise(2000, 7)], &c).unwrap();
        let mut u = t.zeros_like(2);
        for k in 0..t.bins() {
            u.set_bin_series(k, &t.bin_series(k));
        }
        assert_eq!(t, u);
    }
}
