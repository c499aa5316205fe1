use std::f64::consts::PI;

use num_complex::Complex64;

use super::levinson_durbin;

/// Order of the per-frame AR model used for the desired-signal PSD.
pub const DEFAULT_AR_ORDER: usize = 21;

/// Relative PSD floor: `γ ≥ 1e-10 · (mean frame power + 1e-20)`.
const PSD_FLOOR: f64 = 1e-10;
const PSD_FLOOR_OFFSET: f64 = 1e-20;

/// Frame-wise AR spectral envelope estimator.
///
/// Takes the non-negative half of a frame's DFT (`K/2 + 1` bins), forms the
/// autocorrelation as the inverse DFT of the Hermitian-extended periodogram,
/// fits an order-`Q` AR model with Levinson-Durbin and evaluates its power
/// response on the same bins. Trigonometric tables are built once so the
/// estimator can be reused across frames.
#[derive(Clone, Debug)]
pub struct ArPsdEstimator {
    fft_size: usize,
    order: usize,
    /// `cos(2π k τ / K)` for τ = 0..=Q (rows) and k = 0..=K/2 (columns).
    lag_cos: Vec<f64>,
    /// `e^{−j2π k q / K}` for q = 1..=Q (rows) and k = 0..=K/2.
    response: Vec<Complex64>,
}

impl ArPsdEstimator {
    /// `fft_size` must be even and `order < fft_size / 2`.
    pub fn new(fft_size: usize, order: usize) -> Self {
        assert!(fft_size >= 2 && fft_size % 2 == 0, "fft size must be even");
        assert!(order < fft_size / 2, "AR order must be below K/2");
        let bins = fft_size / 2 + 1;
        let mut lag_cos = Vec::with_capacity((order + 1) * bins);
        for tau in 0..=order {
            for k in 0..bins {
                let ph = 2.0 * PI * ((k * tau) % fft_size) as f64 / fft_size as f64;
                lag_cos.push(ph.cos());
            }
        }
        let mut response = Vec::with_capacity(order * bins);
        for q in 1..=order {
            for k in 0..bins {
                let ph = -2.0 * PI * ((k * q) % fft_size) as f64 / fft_size as f64;
                response.push(Complex64::from_polar(1.0, ph));
            }
        }
        Self {
            fft_size,
            order,
            lag_cos,
            response,
        }
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// PSD from a half spectrum `X[0..=K/2]`.
    pub fn estimate(&self, half_spectrum: &[Complex64]) -> Vec<f64> {
        let power: Vec<f64> = half_spectrum.iter().map(|z| z.norm_sqr()).collect();
        self.estimate_from_power(&power)
    }

    /// PSD from a half periodogram `|X[0..=K/2]|²`, e.g. an average over
    /// channels.
    pub fn estimate_from_power(&self, power: &[f64]) -> Vec<f64> {
        let bins = self.bins();
        assert_eq!(power.len(), bins, "expected K/2+1 bins");
        let autocorr = self.autocorrelation(power);
        let floor = PSD_FLOOR * (autocorr[0].max(0.0) + PSD_FLOOR_OFFSET);
        let model = match levinson_durbin(&autocorr) {
            Ok(m) => m,
            Err(_) => return vec![floor; bins],
        };
        if model.clamped {
            log::trace!("AR fit clamped a reflection coefficient");
        }
        (0..bins)
            .map(|k| {
                let mut a = Complex64::new(1.0, 0.0);
                for (q, coef) in model.coefficients.iter().enumerate() {
                    a -= self.response[q * bins + k] * *coef;
                }
                (model.gain / a.norm_sqr()).max(floor)
            })
            .collect()
    }

    /// `r[τ]`, τ = 0..=Q, of the full-spectrum periodogram.
    fn autocorrelation(&self, power: &[f64]) -> Vec<f64> {
        let bins = self.bins();
        let k_norm = 1.0 / self.fft_size as f64;
        (0..=self.order)
            .map(|tau| {
                let row = &self.lag_cos[tau * bins..(tau + 1) * bins];
                let mut acc = power[0] * row[0] + power[bins - 1] * row[bins - 1];
                for k in 1..bins - 1 {
                    acc += 2.0 * power[k] * row[k];
                }
                acc * k_norm
            })
            .collect()
    }
}

/// One-shot form of [`ArPsdEstimator::estimate`] for a half spectrum of
/// `K/2 + 1` bins.
pub fn ar_psd_frame(half_spectrum: &[Complex64], order: usize) -> Vec<f64> {
    let fft_size = 2 * (half_spectrum.len() - 1);
    ArPsdEstimator::new(fft_size, order).estimate(half_spectrum)
}
