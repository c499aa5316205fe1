use crate::{Error, Result};

/// Magnitude that reflection coefficients are clamped to when the
/// autocorrelation sequence is not positive definite.
pub const REFLECTION_CLAMP: f64 = 1.0 - 1e-6;

/// All-pole model `x[t] = Σ_q a_q x[t−q] + e[t]` with innovation power
/// `gain`, i.e. spectrum `gain / |1 − Σ a_q e^{−jωq}|²`.
#[derive(Clone, Debug, PartialEq)]
pub struct ArModel {
    /// `a_1 ..= a_Q`.
    pub coefficients: Vec<f64>,
    /// Final prediction-error power.
    pub gain: f64,
    /// Set when at least one reflection coefficient had to be clamped.
    pub clamped: bool,
}

impl ArModel {
    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    /// Model power spectrum at normalized angular frequency `omega`.
    pub fn power_at(&self, omega: f64) -> f64 {
        let (mut re, mut im) = (1.0, 0.0);
        for (q, a) in self.coefficients.iter().enumerate() {
            let ph = omega * (q + 1) as f64;
            re -= a * ph.cos();
            im += a * ph.sin();
        }
        self.gain / (re * re + im * im)
    }
}

/// Levinson-Durbin recursion on `autocorr = [r0, r1, .., rQ]`.
///
/// Returns the order-`Q` predictor solving the Yule-Walker equations. If a
/// reflection coefficient reaches magnitude one (non positive definite
/// input) it is clamped to [`REFLECTION_CLAMP`] and the model is flagged.
pub fn levinson_durbin(autocorr: &[f64]) -> Result<ArModel> {
    let r0 = autocorr.first().copied().unwrap_or(0.0);
    if !(r0 > 0.0) || !r0.is_finite() {
        return Err(Error::DegenerateAutocorrelation(r0));
    }
    let order = autocorr.len() - 1;
    let mut a = vec![0.0; order];
    let mut prev = vec![0.0; order];
    let mut err = r0;
    let mut clamped = false;
    for i in 0..order {
        let mut acc = autocorr[i + 1];
        for j in 0..i {
            acc -= a[j] * autocorr[i - j];
        }
        let mut k = acc / err;
        if !k.is_finite() || k.abs() >= 1.0 {
            k = if k.is_nan() { 0.0 } else { k.signum() * REFLECTION_CLAMP };
            clamped = true;
        }
        prev[..i].copy_from_slice(&a[..i]);
        for j in 0..i {
            a[j] = prev[j] - k * prev[i - 1 - j];
        }
        a[i] = k;
        err *= 1.0 - k * k;
    }
    Ok(ArModel {
        coefficients: a,
        gain: err.max(0.0),
        clamped,
    })
}
