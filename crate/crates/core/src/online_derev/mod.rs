//! Online RTF-constrained MCLP for moving sources.
//!
//! Each bin keeps a Kalman filter over time-varying prediction
//! coefficients with a random-walk model whose innovation variance follows
//! the change of the posterior mean. The RTF is tracked by gated recursive
//! averaging and the MVDR filter is refreshed every frame from a recursively
//! averaged covariance of the predicted reverberation. Frames are processed
//! strictly causally, one output frame per input frame.

mod kalman;

pub use kalman::{
    a_priori_desired, kalman_predict, kalman_update, online_mvdr, update_innovation_cov, update_reverb_cov,
    update_rtf_gated, KalmanBinState,
};

use std::collections::VecDeque;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::batch_derev::BinVectors;
use crate::filters::{apply_bin, BinFilter, FilterLog, FilterShape};
use crate::numerics::{ArPsdEstimator, Ridge, DEFAULT_AR_ORDER};
use crate::stft::{synthesize, StftConfig, StftTensor};
use crate::{Error, Result};

/// How the innovation covariance `Λ` evolves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Innovation {
    /// `λ_i` from the change of the posterior mean, plus `ε`.
    #[default]
    ChangingMean,
    /// `Λ = 0`: the recursion reduces to recursive least squares.
    Zero,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OnlineConfig {
    pub taps: usize,
    pub delay: usize,
    pub ar_order: usize,
    pub reference_mic: usize,
    /// Smoothing of the reverberation covariance, `α₁`.
    pub alpha_noise: f64,
    /// Smoothing of the RTF covariance, `α₂`.
    pub alpha_rtf: f64,
    /// Innovation floor `ε`.
    pub epsilon: f64,
    /// Initial state covariance `η`.
    pub eta: f64,
    /// Early-to-late energy ratio above which the RTF is updated.
    pub rtf_gate: f64,
    pub known_rtf: Option<BinVectors>,
    pub innovation: Innovation,
    pub ridge: Ridge,
    /// Initial `R_rr = floor · I`.
    pub reverb_floor: f64,
    /// `γ` is floored at this fraction of its running mean over all frames
    /// so far; 0 disables the floor.
    pub gamma_floor: f64,
}

impl Default for OnlineConfig {
    fn default() -> Self {
        Self {
            taps: 12,
            delay: 2,
            ar_order: DEFAULT_AR_ORDER,
            reference_mic: 0,
            alpha_noise: 0.1,
            alpha_rtf: 0.1,
            epsilon: 1e-6,
            eta: 1e-3,
            rtf_gate: 0.1,
            known_rtf: None,
            innovation: Innovation::ChangingMean,
            ridge: Ridge::default(),
            reverb_floor: 1e-6,
            gamma_floor: 0.0,
        }
    }
}

impl OnlineConfig {
    /// Defaults for moving talkers: `α₁ = α₂ = 0.01`.
    pub fn moving() -> Self {
        Self {
            alpha_noise: 0.01,
            alpha_rtf: 0.01,
            ..Self::default()
        }
    }

    pub fn validate(&self, mics: usize, bins: usize) -> Result<()> {
        if self.taps == 0 {
            return Err(Error::Config("taps must be at least 1".into()));
        }
        if self.reference_mic >= mics {
            return Err(Error::Config(format!(
                "reference mic {} out of range for {mics} mics",
                self.reference_mic
            )));
        }
        for (name, a) in [("alpha_noise", self.alpha_noise), ("alpha_rtf", self.alpha_rtf)] {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1], got {a}")));
            }
        }
        if self.ar_order + 1 >= bins {
            return Err(Error::Config(format!(
                "AR order {} must be below half the FFT size {}",
                self.ar_order,
                2 * (bins - 1)
            )));
        }
        if !(self.epsilon > 0.0) || !(self.eta > 0.0) {
            return Err(Error::Config("epsilon and eta must be positive".into()));
        }
        if let Some(a) = &self.known_rtf {
            if a.len() != bins || a.iter().any(|v| v.len() != mics) {
                return Err(Error::ShapeMismatch(format!("known RTF must be {bins} bins × {mics} mics")));
            }
        }
        Ok(())
    }
}

/// Per-frame hook called after every bin of frame `n` is updated.
pub trait FrameObserver {
    fn frame(&mut self, n: usize, states: &[KalmanBinState]);
}

/// Applies each frame's filters to another multichannel STFT as the run
/// progresses, e.g. the interferer-only signal, without storing the filter
/// trajectory.
pub struct ProbeFilter<'a> {
    probe: &'a StftTensor,
    taps: usize,
    delay: usize,
    output: StftTensor,
}

impl<'a> ProbeFilter<'a> {
    pub fn new(probe: &'a StftTensor, config: &OnlineConfig) -> Self {
        Self {
            probe,
            taps: config.taps,
            delay: config.delay,
            output: probe.zeros_like(1),
        }
    }

    pub fn into_output(self) -> StftTensor {
        self.output
    }
}

impl FrameObserver for ProbeFilter<'_> {
    fn frame(&mut self, n: usize, states: &[KalmanBinState]) {
        if n >= self.probe.frames() {
            return;
        }
        let mics = self.probe.mics();
        let mut phi = vec![Complex64::new(0.0, 0.0); mics * self.taps];
        let mut res = vec![Complex64::new(0.0, 0.0); mics];
        for (k, s) in states.iter().enumerate() {
            crate::filters::fill_predictor(self.probe, n, k, self.taps, self.delay, &mut phi);
            let filter = BinFilter {
                g: s.mu.clone(),
                w: Some(s.w.clone()),
            };
            let y = apply_bin(&filter, self.probe.vector(n, k), &phi, s.reference_mic, &mut res);
            self.output.set(n, k, 0, y);
        }
    }
}

/// Records the full per-frame filter trajectory (memory grows with
/// frames × bins × ML × M).
#[derive(Default)]
pub struct FilterRecorder {
    pub frames: Vec<Vec<BinFilter>>,
}

impl FrameObserver for FilterRecorder {
    fn frame(&mut self, _n: usize, states: &[KalmanBinState]) {
        self.frames.push(
            states
                .iter()
                .map(|s| BinFilter {
                    g: s.mu.clone(),
                    w: Some(s.w.clone()),
                })
                .collect(),
        );
    }
}

impl FilterRecorder {
    pub fn into_log(self, shape: FilterShape) -> FilterLog {
        FilterLog::Online {
            shape,
            frames: self.frames,
        }
    }
}

/// Streaming online dereverberation.
pub struct OnlineDereverb {
    config: OnlineConfig,
    stft: StftConfig,
    mics: usize,
    states: Vec<KalmanBinState>,
    history: VecDeque<Vec<Complex64>>,
    psd: ArPsdEstimator,
    frame_index: usize,
    rtf_updates: usize,
    gamma_sum: f64,
}

impl OnlineDereverb {
    pub fn new(stft: StftConfig, mics: usize, config: OnlineConfig) -> Result<Self> {
        stft.validate()?;
        let bins = stft.bins();
        config.validate(mics, bins)?;
        let states = (0..bins)
            .map(|k| {
                let mut s = KalmanBinState::new(mics, config.taps, config.eta, config.epsilon, config.reference_mic, config.reverb_floor);
                if config.innovation == Innovation::Zero {
                    s.lambda.iter_mut().for_each(|l| *l = 0.0);
                }
                if let Some(a) = &config.known_rtf {
                    s.a = a[k].clone();
                }
                s
            })
            .collect();
        Ok(Self {
            psd: ArPsdEstimator::new(stft.fft_size, config.ar_order),
            config,
            stft,
            mics,
            states,
            history: VecDeque::new(),
            frame_index: 0,
            rtf_updates: 0,
            gamma_sum: 0.0,
        })
    }

    pub fn states(&self) -> &[KalmanBinState] {
        &self.states
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    /// Accepted gated RTF updates so far, summed over bins.
    pub fn rtf_updates(&self) -> usize {
        self.rtf_updates
    }

    pub fn shape(&self) -> FilterShape {
        FilterShape {
            mics: self.mics,
            taps: self.config.taps,
            delay: self.config.delay,
            bins: self.stft.bins(),
            reference_mic: self.config.reference_mic,
        }
    }

    fn predictor(&self, k: usize, out: &mut [Complex64]) {
        let (taps, delay, mics) = (self.config.taps, self.config.delay, self.mics);
        let h = self.history.len();
        for l in 0..taps {
            let lag = delay + 1 + l;
            for m in 0..mics {
                out[m * taps + l] = if lag <= h {
                    self.history[h - lag][k * mics + m]
                } else {
                    Complex64::new(0.0, 0.0)
                };
            }
        }
    }

    /// Processes one frame given bin-major (`[k][m]`) and returns the
    /// enhanced reference-channel spectrum `[k]`.
    pub fn process_frame(&mut self, frame: &[Complex64]) -> Result<Vec<Complex64>> {
        let (bins, mics) = (self.stft.bins(), self.mics);
        if frame.len() != bins * mics {
            return Err(Error::ShapeMismatch(format!(
                "frame has {} values, expected {bins} bins × {mics} mics",
                frame.len()
            )));
        }
        let dim = mics * self.config.taps;
        let phis: Vec<Vec<Complex64>> = (0..bins)
            .map(|k| {
                let mut phi = vec![Complex64::new(0.0, 0.0); dim];
                self.predictor(k, &mut phi);
                phi
            })
            .collect();

        // a-priori output with the previous frame's filters drives γ
        let prior: Vec<Complex64> = (0..bins)
            .map(|k| a_priori_desired(&self.states[k], &frame[k * mics..(k + 1) * mics], &phis[k]))
            .collect();
        let mut gamma = self.psd.estimate(&prior);
        self.gamma_sum += gamma.iter().sum::<f64>() / bins as f64;
        if self.config.gamma_floor > 0.0 {
            let floor = self.config.gamma_floor * self.gamma_sum / (self.frame_index + 1) as f64;
            gamma.iter_mut().for_each(|g| *g = g.max(floor));
        }

        let cfg = &self.config;
        let first = self.frame_index == 0;
        let known = cfg.known_rtf.is_some();
        let results: Vec<Result<(Complex64, bool)>> = self
            .states
            .par_iter_mut()
            .with_min_len(8)
            .enumerate()
            .map(|(k, s)| {
                let x = &frame[k * mics..(k + 1) * mics];
                let phi = &phis[k];
                let g = gamma[k];
                if first && s.r_dd_pending {
                    let p = x.iter().map(|z| z.norm_sqr()).sum::<f64>() / mics as f64;
                    s.r_dd = crate::numerics::HermitianMatrix::scaled_identity(mics, p);
                    s.r_dd_pending = false;
                }
                kalman_predict(s);
                s.prev_mu.as_mut_slice().copy_from_slice(s.mu.as_slice());
                kalman_update(s, x, phi, g);
                if cfg.innovation == Innovation::ChangingMean {
                    update_innovation_cov(s, cfg.epsilon);
                }
                let mut d = vec![Complex64::new(0.0, 0.0); mics];
                s.residual_into(x, phi, &mut d);
                let r: Vec<Complex64> = x.iter().zip(&d).map(|(a, b)| a - b).collect();
                let updated = !known && update_rtf_gated(s, &d, &r, cfg.alpha_rtf, cfg.rtf_gate);
                update_reverb_cov(s, &r, g, cfg.alpha_noise);
                online_mvdr(s, cfg.ridge)?;
                Ok((crate::numerics::dot_conj(&s.w, &d), updated))
            })
            .collect();
        let mut out = Vec::with_capacity(bins);
        for r in results {
            let (y, updated) = r?;
            self.rtf_updates += updated as usize;
            out.push(y);
        }

        self.history.push_back(frame.to_vec());
        if self.history.len() > self.config.delay + self.config.taps {
            self.history.pop_front();
        }
        self.frame_index += 1;
        Ok(out)
    }
}

/// Timing and bookkeeping of an online run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OnlineReport {
    /// Wall-clock seconds spent on each frame.
    pub frame_times: Vec<f64>,
    pub rtf_updates: usize,
}

impl OnlineReport {
    pub fn mean_frame_time(&self) -> f64 {
        if self.frame_times.is_empty() {
            0.0
        } else {
            self.frame_times.iter().sum::<f64>() / self.frame_times.len() as f64
        }
    }
}

#[derive(Clone, Debug)]
pub struct OnlineOutput {
    pub enhanced: StftTensor,
    pub waveform: Vec<f64>,
    pub report: OnlineReport,
}

/// Runs [`OnlineDereverb`] over a whole recording.
pub fn run_online(tensor: &StftTensor, config: &OnlineConfig) -> Result<OnlineOutput> {
    run_online_observed(tensor, config, &mut [])
}

/// [`run_online`] with per-frame observers.
pub fn run_online_observed(
    tensor: &StftTensor,
    config: &OnlineConfig,
    observers: &mut [&mut dyn FrameObserver],
) -> Result<OnlineOutput> {
    let mut engine = OnlineDereverb::new(*tensor.config(), tensor.mics(), config.clone())?;
    let mut enhanced = tensor.zeros_like(1);
    let mut report = OnlineReport::default();
    for n in 0..tensor.frames() {
        let start = Instant::now();
        let y = engine.process_frame(tensor.frame(n))?;
        report.frame_times.push(start.elapsed().as_secs_f64());
        enhanced.frame_mut(n).copy_from_slice(&y);
        for obs in observers.iter_mut() {
            obs.frame(n, engine.states());
        }
    }
    report.rtf_updates = engine.rtf_updates();
    let waveform = synthesize(&enhanced).remove(0);
    Ok(OnlineOutput {
        enhanced,
        waveform,
        report,
    })
}
