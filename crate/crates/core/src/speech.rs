//! Deterministic synthetic speech for tests and demos.
//!
//! Utterances are strings of syllables: an optional fricative burst
//! (resonant-filtered noise) followed by a voiced nucleus, where a
//! glottal pulse train with a drifting, jittered pitch excites a cascade of
//! four formant resonators gliding between vowel targets. Syllables are
//! shaped by raised-cosine envelopes and grouped into words separated by
//! pauses, giving the on/off energy structure and spectral envelopes that
//! drive the AR and MCLP estimators the way real speech does.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Voice {
    /// Mean fundamental frequency in Hz.
    pub f0: f64,
    /// Formant scale relative to an adult male tract.
    pub formant_scale: f64,
}

impl Voice {
    pub const MALE: Voice = Voice {
        f0: 110.0,
        formant_scale: 1.0,
    };
    pub const FEMALE: Voice = Voice {
        f0: 210.0,
        formant_scale: 1.17,
    };
}

const VOWELS: [[f64; 4]; 8] = [
    [270.0, 2290.0, 3010.0, 3500.0],
    [390.0, 1990.0, 2550.0, 3600.0],
    [530.0, 1840.0, 2480.0, 3500.0],
    [660.0, 1720.0, 2410.0, 3500.0],
    [730.0, 1090.0, 2440.0, 3400.0],
    [570.0, 840.0, 2410.0, 3300.0],
    [300.0, 870.0, 2240.0, 3300.0],
    [490.0, 1350.0, 1690.0, 3400.0],
];
const BANDWIDTHS: [f64; 4] = [80.0, 110.0, 160.0, 220.0];

/// Two-pole resonator with per-sample coefficients.
#[derive(Clone, Copy, Default)]
struct Resonator {
    y1: f64,
    y2: f64,
}

impl Resonator {
    #[inline]
    fn step(&mut self, x: f64, freq: f64, bw: f64, fs: f64) -> f64 {
        let r = (-PI * bw / fs).exp();
        let c = 2.0 * r * (2.0 * PI * freq / fs).cos();
        // unit gain at DC
        let y = (1.0 - c + r * r) * x + c * self.y1 - r * r * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

fn raised_cosine(t: usize, len: usize, ramp: usize) -> f64 {
    let ramp = ramp.min(len / 2).max(1);
    if t < ramp {
        0.5 - 0.5 * (PI * t as f64 / ramp as f64).cos()
    } else if t >= len - ramp {
        0.5 - 0.5 * (PI * (len - t) as f64 / ramp as f64).cos()
    } else {
        1.0
    }
}

struct Talker {
    rng: ChaCha8Rng,
    fs: f64,
    voice: Voice,
    formants: [Resonator; 4],
    glottal: [f64; 2],
    last_pulse: f64,
    phase: f64,
}

impl Talker {
    fn vowel(&mut self) -> [f64; 4] {
        let v = VOWELS[self.rng.random_range(0..VOWELS.len())];
        v.map(|f| f * self.voice.formant_scale * self.rng.random_range(0.95..1.05))
    }

    fn fricative(&mut self, out: &mut Vec<f64>) {
        let len = (self.rng.random_range(0.04..0.11) * self.fs) as usize;
        let centre = self.rng.random_range(2500.0..6500.0f64).min(0.45 * self.fs);
        let bw = self.rng.random_range(800.0..2500.0);
        let level = self.rng.random_range(0.08..0.3);
        let mut res = Resonator::default();
        let seg: Vec<f64> = (0..len)
            .map(|t| {
                let n: f64 = self.rng.sample(StandardNormal);
                res.step(n, centre, bw, self.fs) * raised_cosine(t, len, len / 4)
            })
            .collect();
        push_at_level(out, seg, level);
    }

    fn voiced(&mut self, out: &mut Vec<f64>, pitch_start: f64, pitch_end: f64) {
        let len = (self.rng.random_range(0.11..0.26) * self.fs) as usize;
        let (from, to) = (self.vowel(), self.vowel());
        let ramp = (0.025 * self.fs) as usize;
        let level = self.rng.random_range(0.5..1.0);
        let mut seg = Vec::with_capacity(len);
        for t in 0..len {
            let u = t as f64 / len as f64;
            // smoothstep glide between the two vowel targets
            let s = u * u * (3.0 - 2.0 * u);
            let f0 = (pitch_start + (pitch_end - pitch_start) * u) * (1.0 + 0.01 * self.rng.sample::<f64, _>(StandardNormal));
            self.phase += f0 / self.fs;
            let mut x = 0.0;
            if self.phase >= 1.0 {
                self.phase -= 1.0;
                x = 1.0 + 0.05 * self.rng.sample::<f64, _>(StandardNormal);
            }
            // spectral tilt of the glottal flow, then lip radiation
            self.glottal[0] = 0.97 * self.glottal[0] + x;
            self.glottal[1] = 0.97 * self.glottal[1] + self.glottal[0];
            let flow = self.glottal[1];
            let mut y = flow - self.last_pulse + 0.02 * self.rng.sample::<f64, _>(StandardNormal);
            self.last_pulse = flow;
            for (i, res) in self.formants.iter_mut().enumerate() {
                let f = from[i] + (to[i] - from[i]) * s;
                y = res.step(y, f.min(0.45 * self.fs), BANDWIDTHS[i], self.fs);
            }
            seg.push(y * raised_cosine(t, len, ramp));
        }
        push_at_level(out, seg, level);
    }
}

/// Appends `seg` scaled to RMS `level`.
fn push_at_level(out: &mut Vec<f64>, seg: Vec<f64>, level: f64) {
    let rms = (seg.iter().map(|v| v * v).sum::<f64>() / seg.len().max(1) as f64).sqrt();
    let g = if rms > 0.0 { level / rms } else { 0.0 };
    out.extend(seg.into_iter().map(|v| v * g));
}

/// `duration` seconds of synthetic speech at `sample_rate`, normalised to
/// an RMS of 0.1 over the whole signal. The same seed always gives the
/// same samples.
pub fn synthesize_utterance(seed: u64, duration: f64, sample_rate: u32, voice: Voice) -> Vec<f64> {
    let fs = sample_rate as f64;
    let total = (duration * fs).round() as usize;
    let mut talker = Talker {
        rng: ChaCha8Rng::seed_from_u64(seed),
        fs,
        voice,
        formants: [Resonator::default(); 4],
        glottal: [0.0; 2],
        last_pulse: 0.0,
        phase: 0.0,
    };
    let mut out = Vec::with_capacity(total + fs as usize);
    let lead = (talker.rng.random_range(0.05..0.15) * fs) as usize;
    out.resize(lead, 0.0);
    while out.len() < total {
        let syllables = talker.rng.random_range(1..=4);
        // declination across the word
        let top = voice.f0 * talker.rng.random_range(1.0..1.25);
        for s in 0..syllables {
            if talker.rng.random_bool(0.45) {
                talker.fricative(&mut out);
            }
            let a = top * (1.0 - 0.06 * s as f64);
            let fall = talker.rng.random_range(0.85..1.0);
            talker.voiced(&mut out, a, a * fall);
        }
        let pause = (talker.rng.random_range(0.04..0.3) * fs) as usize;
        out.extend(std::iter::repeat_n(0.0, pause));
    }
    out.truncate(total);
    let rms = (out.iter().map(|v| v * v).sum::<f64>() / total.max(1) as f64).sqrt();
    if rms > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.1 / rms);
    }
    out
}
