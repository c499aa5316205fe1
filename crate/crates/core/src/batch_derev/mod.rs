//! Batch RTF-constrained MCLP dereverberation for static sources, with the
//! plain MCLP (WPE), cascaded MCLP + MVDR and superdirective baselines.
//!
//! The joint estimator alternates over a whole recording between the
//! prediction filters `G[k]`, the RTF `a[k]`, the MVDR filter `w[k]` and the
//! desired-signal variance `γ[n, k]`.

mod gamma;
mod mclp;
mod spatial;

pub use gamma::{estimate_gamma, estimate_gamma_averaged, GammaField};
pub use mclp::{build_predictor, estimate_mclp_filters, prediction_residual, weighted_correlations};
pub use spatial::{
    diffuse_coherence, distortion_error, estimate_rtf, free_field_rtf, mvdr_weights, rtf_from_covariance,
    rtf_from_rir, RtfEstimate,
};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::filters::{BinFilter, FilterLog, FilterShape};
use crate::numerics::{dot_conj, CMatrix, HermitianMatrix, Ridge, DEFAULT_AR_ORDER};
use crate::rir_sim::{ArrayGeometry, Position};
use crate::stft::{synthesize, StftTensor};
use crate::{Error, Result};

/// Per-bin RTF vectors, `[bin][mic]`.
pub type BinVectors = Vec<Vec<Complex64>>;

#[derive(Clone, Debug, PartialEq)]
pub struct BatchConfig {
    /// Prediction taps per mic, `L`.
    pub taps: usize,
    /// Prediction delay in frames, `D`.
    pub delay: usize,
    pub iterations: usize,
    /// AR order `Q` of the desired-signal PSD.
    pub ar_order: usize,
    /// 0-based reference microphone.
    pub reference_mic: usize,
    /// Fixed RTF of the desired source; disables RTF re-estimation.
    pub known_rtf: Option<BinVectors>,
    /// Loading of `R_φφ` and `R_rr` before inversion.
    pub ridge: Ridge,
    /// Lower bound on `γ` as a fraction of its mean over the recording.
    pub gamma_floor: f64,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            taps: 12,
            delay: 2,
            iterations: 5,
            ar_order: DEFAULT_AR_ORDER,
            reference_mic: 0,
            known_rtf: None,
            ridge: Ridge::default(),
            gamma_floor: DEFAULT_GAMMA_FLOOR,
        }
    }
}

pub const DEFAULT_GAMMA_FLOOR: f64 = 1e-4;

impl BatchConfig {
    pub fn validate(&self, mics: usize, bins: usize) -> Result<()> {
        if self.taps == 0 || self.iterations == 0 {
            return Err(Error::Config("taps and iterations must be at least 1".into()));
        }
        if self.reference_mic >= mics {
            return Err(Error::Config(format!(
                "reference mic {} out of range for {mics} mics",
                self.reference_mic
            )));
        }
        if self.ar_order + 1 >= bins {
            return Err(Error::Config(format!(
                "AR order {} must be below half the FFT size {}",
                self.ar_order,
                2 * (bins - 1)
            )));
        }
        if self.delay == 0 {
            log::warn!("prediction delay D = 0 also removes the short-term speech correlation");
        }
        if let Some(a) = &self.known_rtf {
            if a.len() != bins || a.iter().any(|v| v.len() != mics) {
                return Err(Error::ShapeMismatch(format!("known RTF must be {bins} bins × {mics} mics")));
            }
        }
        Ok(())
    }

    fn shape(&self, mics: usize, bins: usize) -> FilterShape {
        FilterShape {
            mics,
            taps: self.taps,
            delay: self.delay,
            bins,
            reference_mic: self.reference_mic,
        }
    }
}

/// Result of a batch enhancement.
#[derive(Clone, Debug)]
pub struct BatchOutput {
    /// Single-channel enhanced STFT.
    pub enhanced: StftTensor,
    pub waveform: Vec<f64>,
    /// Final filters, usable on other signals through [`FilterLog::apply`].
    pub filters: FilterLog,
    /// Final RTF per bin; empty for methods without a spatial stage.
    pub rtf: BinVectors,
    pub gamma: Option<GammaField>,
    /// Multichannel prediction residual `d̂` of the last iteration.
    pub residual: Option<StftTensor>,
}

/// Snapshot handed to a batch observer after each iteration.
pub struct IterationView<'a> {
    /// 0 is the initial spatial filter, `1..=iterations` the loop passes.
    pub index: usize,
    pub enhanced: &'a StftTensor,
    pub rtf: &'a [Vec<Complex64>],
    pub w: &'a [Vec<Complex64>],
}

/// `wᴴ d[n, k]` for every frame and bin.
pub fn spatial_output(d: &StftTensor, w: &[Vec<Complex64>]) -> StftTensor {
    let mut out = d.zeros_like(1);
    for n in 0..d.frames() {
        for (k, wk) in w.iter().enumerate() {
            out.set(n, k, 0, dot_conj(wk, d.vector(n, k)));
        }
    }
    out
}

fn rtf_per_bin(d: &StftTensor, reference: usize, previous: Option<&BinVectors>) -> BinVectors {
    (0..d.bins())
        .into_par_iter()
        .map(|k| {
            let series = d.bin_series(k);
            estimate_rtf(&series, d.mics(), reference, previous.map(|p| p[k].as_slice())).a
        })
        .collect()
}

/// `Σ_n γ⁻¹ r r ᴴ` for bin `k`.
fn weighted_covariance(r: &StftTensor, gamma: &GammaField, k: usize) -> HermitianMatrix {
    let mut cov = HermitianMatrix::zeros(r.mics());
    for n in 0..r.frames() {
        cov.add_outer_upper(r.vector(n, k), 1.0 / gamma.get(n, k));
    }
    cov.mirror_upper();
    cov
}

fn unweighted_covariance(d: &StftTensor, k: usize) -> HermitianMatrix {
    let mut cov = HermitianMatrix::zeros(d.mics());
    for n in 0..d.frames() {
        cov.add_outer_upper(d.vector(n, k), 1.0);
    }
    cov.mirror_upper();
    cov
}

fn gamma_of(out: &StftTensor, config: &BatchConfig) -> GammaField {
    let mut g = estimate_gamma(out, 0, config.ar_order);
    g.apply_relative_floor(config.gamma_floor);
    g
}

/// Joint RTF-constrained MCLP.
pub fn run_rtf_mclp(tensor: &StftTensor, config: &BatchConfig) -> Result<BatchOutput> {
    run_rtf_mclp_observed(tensor, config, &mut |_| {})
}

/// [`run_rtf_mclp`] reporting the spatial output after every iteration.
pub fn run_rtf_mclp_observed(
    tensor: &StftTensor,
    config: &BatchConfig,
    observer: &mut dyn FnMut(IterationView<'_>),
) -> Result<BatchOutput> {
    let (mics, bins) = (tensor.mics(), tensor.bins());
    if mics < 2 {
        return Err(Error::Config("RTF-MCLP needs at least two microphones".into()));
    }
    config.validate(mics, bins)?;
    let reference = config.reference_mic;

    // iteration 0: d̂ = x, noise covariance from R_dd
    let mut rtf = match &config.known_rtf {
        Some(a) => a.clone(),
        None => rtf_per_bin(tensor, reference, None),
    };
    let mut w: BinVectors = (0..bins)
        .into_par_iter()
        .map(|k| mvdr_weights(&unweighted_covariance(tensor, k), &rtf[k], config.ridge))
        .collect::<Result<_>>()?;
    let mut out = spatial_output(tensor, &w);
    let mut gamma = gamma_of(&out, config);
    observer(IterationView {
        index: 0,
        enhanced: &out,
        rtf: &rtf,
        w: &w,
    });

    let mut g = vec![CMatrix::zeros(mics * config.taps, mics); bins];
    let mut early = tensor.clone();
    for it in 1..=config.iterations {
        g = estimate_mclp_filters(tensor, &gamma, config.taps, config.delay, config.ridge)?;
        let (d, r) = prediction_residual(tensor, &g, config.taps, config.delay)?;
        if config.known_rtf.is_none() {
            rtf = rtf_per_bin(&d, reference, Some(&rtf));
        }
        w = (0..bins)
            .into_par_iter()
            .map(|k| mvdr_weights(&weighted_covariance(&r, &gamma, k), &rtf[k], config.ridge))
            .collect::<Result<_>>()?;
        out = spatial_output(&d, &w);
        gamma = gamma_of(&out, config);
        early = d;
        observer(IterationView {
            index: it,
            enhanced: &out,
            rtf: &rtf,
            w: &w,
        });
    }

    let filters = FilterLog::Batch {
        shape: config.shape(mics, bins),
        bins: g
            .into_iter()
            .zip(&w)
            .map(|(g, w)| BinFilter { g, w: Some(w.clone()) })
            .collect(),
    };
    let waveform = synthesize(&out).remove(0);
    Ok(BatchOutput {
        enhanced: out,
        waveform,
        filters,
        rtf,
        gamma: Some(gamma),
        residual: Some(early),
    })
}

/// Weighted prediction error dereverberation (MCLP alone).
///
/// `γ` comes from the AR fit of the residual periodogram averaged over
/// mics; the output is the reference channel of the residual.
pub fn run_wpe(tensor: &StftTensor, config: &BatchConfig) -> Result<BatchOutput> {
    let (mics, bins) = (tensor.mics(), tensor.bins());
    config.validate(mics, bins)?;
    let mut d = tensor.clone();
    let mut g = vec![CMatrix::zeros(mics * config.taps, mics); bins];
    let mut gamma = GammaField::constant(tensor.frames(), bins, 1.0);
    for _ in 0..config.iterations {
        gamma = estimate_gamma_averaged(&d, config.ar_order);
        gamma.apply_relative_floor(config.gamma_floor);
        g = estimate_mclp_filters(tensor, &gamma, config.taps, config.delay, config.ridge)?;
        d = prediction_residual(tensor, &g, config.taps, config.delay)?.0;
    }
    let enhanced = d.channel(config.reference_mic);
    let waveform = synthesize(&enhanced).remove(0);
    let filters = FilterLog::Batch {
        shape: config.shape(mics, bins),
        bins: g.into_iter().map(|g| BinFilter { g, w: None }).collect(),
    };
    Ok(BatchOutput {
        enhanced,
        waveform,
        filters,
        rtf: Vec::new(),
        gamma: Some(gamma),
        residual: Some(d),
    })
}

/// WPE followed by a single RTF estimate and MVDR pass on its output.
pub fn run_cascade(tensor: &StftTensor, config: &BatchConfig) -> Result<BatchOutput> {
    let wpe = run_wpe(tensor, config)?;
    cascade_from_wpe(tensor, &wpe, config)
}

/// Spatial stage of [`run_cascade`] on an existing WPE result.
pub fn cascade_from_wpe(tensor: &StftTensor, wpe: &BatchOutput, config: &BatchConfig) -> Result<BatchOutput> {
    let (mics, bins) = (tensor.mics(), tensor.bins());
    if mics < 2 {
        return Err(Error::Config("the cascade needs at least two microphones".into()));
    }
    config.validate(mics, bins)?;
    let d = wpe
        .residual
        .as_ref()
        .ok_or_else(|| Error::Config("WPE output lacks its residual".into()))?;
    let gamma = wpe
        .gamma
        .as_ref()
        .ok_or_else(|| Error::Config("WPE output lacks its γ field".into()))?;
    let FilterLog::Batch { bins: wpe_bins, .. } = &wpe.filters else {
        return Err(Error::Config("WPE output must carry batch filters".into()));
    };
    let mut r = tensor.clone();
    for n in 0..r.frames() {
        for k in 0..bins {
            let dk = d.vector(n, k).to_vec();
            for (x, e) in r.vector_mut(n, k).iter_mut().zip(&dk) {
                *x -= e;
            }
        }
    }
    let rtf = match &config.known_rtf {
        Some(a) => a.clone(),
        None => rtf_per_bin(d, config.reference_mic, None),
    };
    let w: BinVectors = (0..bins)
        .into_par_iter()
        .map(|k| mvdr_weights(&weighted_covariance(&r, gamma, k), &rtf[k], config.ridge))
        .collect::<Result<_>>()?;
    let enhanced = spatial_output(d, &w);
    let waveform = synthesize(&enhanced).remove(0);
    let filters = FilterLog::Batch {
        shape: config.shape(mics, bins),
        bins: wpe_bins
            .iter()
            .zip(&w)
            .map(|(f, w)| BinFilter {
                g: f.g.clone(),
                w: Some(w.clone()),
            })
            .collect(),
    };
    Ok(BatchOutput {
        enhanced,
        waveform,
        filters,
        rtf,
        gamma: Some(gamma.clone()),
        residual: Some(d.clone()),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdbConfig {
    pub reference_mic: usize,
    pub sound_speed: f64,
    /// Diagonal loading added to the diffuse coherence matrix.
    pub loading: f64,
}

impl Default for SdbConfig {
    fn default() -> Self {
        Self {
            reference_mic: 0,
            sound_speed: 343.0,
            loading: DEFAULT_SDB_LOADING,
        }
    }
}

pub const DEFAULT_SDB_LOADING: f64 = 1e-2;

/// Superdirective beamformer: MVDR against diffuse noise, steered with the
/// free-field RTF toward `source_direction`.
pub fn run_sdb(tensor: &StftTensor, array: &ArrayGeometry, source_direction: Position, config: &SdbConfig) -> Result<BatchOutput> {
    let (mics, bins) = (tensor.mics(), tensor.bins());
    if mics != array.len() {
        return Err(Error::ShapeMismatch(format!(
            "tensor has {mics} channels, array has {} mics",
            array.len()
        )));
    }
    if config.reference_mic >= mics {
        return Err(Error::Config("reference mic out of range".into()));
    }
    let stft = *tensor.config();
    let mut rtf = Vec::with_capacity(bins);
    let mut w = Vec::with_capacity(bins);
    for k in 0..bins {
        let f = stft.bin_frequency(k);
        let a = free_field_rtf(array, source_direction, f, config.sound_speed, config.reference_mic);
        let mut gamma = diffuse_coherence(array, f, config.sound_speed);
        gamma.add_to_diagonal(config.loading);
        w.push(mvdr_weights(&gamma, &a, Ridge::Absolute(0.0))?);
        rtf.push(a);
    }
    let enhanced = spatial_output(tensor, &w);
    let waveform = synthesize(&enhanced).remove(0);
    let shape = FilterShape {
        mics,
        taps: 1,
        delay: 1,
        bins,
        reference_mic: config.reference_mic,
    };
    let filters = FilterLog::Batch {
        shape,
        bins: w
            .iter()
            .map(|w| BinFilter {
                g: CMatrix::zeros(mics, mics),
                w: Some(w.clone()),
            })
            .collect(),
    };
    Ok(BatchOutput {
        enhanced,
        waveform,
        filters,
        rtf,
        gamma: None,
        residual: None,
    })
}
