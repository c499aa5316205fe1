use num_complex::Complex64;

use crate::numerics::ArPsdEstimator;
use crate::stft::StftTensor;

/// Desired-signal variance `γ[n, k]`, strictly positive.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaField {
    frames: usize,
    bins: usize,
    values: Vec<f64>,
}

impl GammaField {
    pub fn new(frames: usize, bins: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), frames * bins);
        Self { frames, bins, values }
    }

    pub fn constant(frames: usize, bins: usize, value: f64) -> Self {
        Self::new(frames, bins, vec![value; frames * bins])
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    #[inline]
    pub fn get(&self, n: usize, k: usize) -> f64 {
        self.values[n * self.bins + k]
    }

    pub fn frame(&self, n: usize) -> &[f64] {
        &self.values[n * self.bins..(n + 1) * self.bins]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Raises every entry to at least `rel · mean(γ)`.
    pub fn apply_relative_floor(&mut self, rel: f64) {
        if rel <= 0.0 || self.values.is_empty() {
            return;
        }
        let mean = self.values.iter().sum::<f64>() / self.values.len() as f64;
        let floor = rel * mean;
        if floor > 0.0 {
            for v in &mut self.values {
                *v = v.max(floor);
            }
        }
    }
}

/// Frame-wise AR PSD of channel `channel` of `tensor`.
pub fn estimate_gamma(tensor: &StftTensor, channel: usize, order: usize) -> GammaField {
    let est = ArPsdEstimator::new(tensor.config().fft_size, order);
    let mut values = Vec::with_capacity(tensor.frames() * tensor.bins());
    let mut frame = vec![Complex64::new(0.0, 0.0); tensor.bins()];
    for n in 0..tensor.frames() {
        for (k, z) in frame.iter_mut().enumerate() {
            *z = tensor.get(n, k, channel);
        }
        values.extend(est.estimate(&frame));
    }
    GammaField::new(tensor.frames(), tensor.bins(), values)
}

/// Frame-wise AR PSD of the periodogram averaged over all channels.
pub fn estimate_gamma_averaged(tensor: &StftTensor, order: usize) -> GammaField {
    let est = ArPsdEstimator::new(tensor.config().fft_size, order);
    let mics = tensor.mics() as f64;
    let mut values = Vec::with_capacity(tensor.frames() * tensor.bins());
    let mut power = vec![0.0; tensor.bins()];
    for n in 0..tensor.frames() {
        for (k, p) in power.iter_mut().enumerate() {
            *p = tensor.vector(n, k).iter().map(|z| z.norm_sqr()).sum::<f64>() / mics;
        }
        values.extend(est.estimate_from_power(&power));
    }
    GammaField::new(tensor.frames(), tensor.bins(), values)
}
