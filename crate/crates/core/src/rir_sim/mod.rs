//! Shoebox room simulation with the image-source method, plus static and
//! moving-source rendering onto a microphone array.

mod image;
mod render;

pub use image::{image_rir, image_rirs, RirOptions, DEFAULT_HIGH_PASS_HZ, SINC_TAPS};
pub use render::{
    convolve, render_moving, render_static, sir_gain, source_images, MOVING_RIR_HOP,
};

use std::f64::consts::PI;

use crate::{Error, Result};

pub type Position = [f64; 3];

/// How the uniform wall absorption is derived from the target RT60.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum AbsorptionModel {
    #[default]
    Sabine,
    Eyring,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Room {
    pub dimensions: [f64; 3],
    pub rt60: f64,
    pub sample_rate: u32,
    pub sound_speed: f64,
    pub absorption_model: AbsorptionModel,
    /// Forces the wall absorption coefficient (1 = anechoic).
    pub absorption_override: Option<f64>,
}

impl Default for Room {
    fn default() -> Self {
        Self {
            dimensions: [6.0, 5.5, 4.5],
            rt60: 0.6,
            sample_rate: 16_000,
            sound_speed: 343.0,
            absorption_model: AbsorptionModel::default(),
            absorption_override: None,
        }
    }
}

impl Room {
    pub fn new(dimensions: [f64; 3], rt60: f64, sample_rate: u32) -> Result<Self> {
        let room = Self {
            dimensions,
            rt60,
            sample_rate,
            ..Self::default()
        };
        room.validate()?;
        Ok(room)
    }

    pub fn anechoic(dimensions: [f64; 3], sample_rate: u32) -> Self {
        Self {
            dimensions,
            sample_rate,
            absorption_override: Some(1.0),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimensions.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(Error::Geometry(format!(
                "room dimensions must be positive, got {:?}",
                self.dimensions
            )));
        }
        if !(self.rt60 > 0.0) || !self.rt60.is_finite() {
            return Err(Error::Config(format!("rt60 must be positive, got {}", self.rt60)));
        }
        if self.sample_rate == 0 || !(self.sound_speed > 0.0) {
            return Err(Error::Config("sample rate and sound speed must be positive".into()));
        }
        if let Some(a) = self.absorption_override {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Config(format!("absorption {a} outside [0, 1]")));
            }
        } else {
            self.absorption()?;
        }
        Ok(())
    }

    pub fn volume(&self) -> f64 {
        self.dimensions.iter().product()
    }

    pub fn surface(&self) -> f64 {
        let [x, y, z] = self.dimensions;
        2.0 * (x * y + x * z + y * z)
    }

    /// Uniform energy absorption coefficient of the walls.
    pub fn absorption(&self) -> Result<f64> {
        if let Some(a) = self.absorption_override {
            return Ok(a);
        }
        // 24 ln(10) V / (c S T60)
        let sabine = 24.0 * 10f64.ln() * self.volume() / (self.sound_speed * self.surface() * self.rt60);
        let alpha = match self.absorption_model {
            AbsorptionModel::Sabine => sabine,
            AbsorptionModel::Eyring => 1.0 - (-sabine).exp(),
        };
        if alpha >= 1.0 {
            return Err(Error::Config(format!(
                "rt60 {} s is too short for a {:?} m room",
                self.rt60, self.dimensions
            )));
        }
        Ok(alpha)
    }

    /// Pressure reflection coefficient `sqrt(1 - α)`.
    pub fn reflection_coefficient(&self) -> Result<f64> {
        Ok((1.0 - self.absorption()?).max(0.0).sqrt())
    }

    pub fn contains(&self, p: &Position) -> bool {
        p.iter()
            .zip(&self.dimensions)
            .all(|(&x, &d)| x.is_finite() && x > 0.0 && x < d)
    }

    pub fn check_inside(&self, p: &Position, what: &str) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::Geometry(format!(
                "{what} at {p:?} lies outside the {:?} m room",
                self.dimensions
            )))
        }
    }

    /// Default RIR length, `rt60 · fs` samples.
    pub fn default_rir_length(&self) -> usize {
        (self.rt60 * self.sample_rate as f64).round().max(1.0) as usize
    }
}

pub fn distance(a: &Position, b: &Position) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ArrayGeometry {
    pub mics: Vec<Position>,
}

impl ArrayGeometry {
    pub fn new(mics: Vec<Position>) -> Result<Self> {
        if mics.is_empty() {
            return Err(Error::Geometry("array has no microphones".into()));
        }
        Ok(Self { mics })
    }

    /// Uniform circular array in the horizontal plane; mic `m` sits at
    /// azimuth `2πm/count`.
    pub fn uca(center: Position, radius: f64, count: usize) -> Result<Self> {
        if count == 0 || !(radius >= 0.0) {
            return Err(Error::Geometry("circular array needs mics and a radius".into()));
        }
        let mics = (0..count)
            .map(|m| {
                let phi = 2.0 * PI * m as f64 / count as f64;
                [center[0] + radius * phi.cos(), center[1] + radius * phi.sin(), center[2]]
            })
            .collect();
        Ok(Self { mics })
    }

    pub fn len(&self) -> usize {
        self.mics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mics.is_empty()
    }

    pub fn center(&self) -> Position {
        let n = self.mics.len() as f64;
        let mut c = [0.0; 3];
        for p in &self.mics {
            for i in 0..3 {
                c[i] += p[i] / n;
            }
        }
        c
    }

    pub fn check_inside(&self, room: &Room) -> Result<()> {
        for (m, p) in self.mics.iter().enumerate() {
            room.check_inside(p, &format!("microphone {m}"))?;
        }
        Ok(())
    }
}

/// A point `distance` metres from `center` at horizontal `azimuth_deg`.
pub fn polar_position(center: Position, distance: f64, azimuth_deg: f64) -> Position {
    let phi = azimuth_deg.to_radians();
    [center[0] + distance * phi.cos(), center[1] + distance * phi.sin(), center[2]]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Interpolation {
    #[default]
    Linear,
    /// Piecewise constant: each waypoint holds until the next one.
    Hold,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    waypoints: Vec<(f64, Position)>,
    interpolation: Interpolation,
}

impl Trajectory {
    pub fn new(waypoints: Vec<(f64, Position)>, interpolation: Interpolation) -> Result<Self> {
        if waypoints.is_empty() {
            return Err(Error::Config("trajectory needs at least one waypoint".into()));
        }
        if waypoints.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::Config("waypoint times must be strictly increasing".into()));
        }
        Ok(Self {
            waypoints,
            interpolation,
        })
    }

    pub fn stationary(position: Position, duration: f64) -> Self {
        Self {
            waypoints: vec![(0.0, position), (duration.max(f64::MIN_POSITIVE), position)],
            interpolation: Interpolation::Linear,
        }
    }

    /// Constant-speed path from `from` to `to` over `duration` seconds.
    pub fn linear(from: Position, to: Position, duration: f64) -> Result<Self> {
        Self::new(vec![(0.0, from), (duration, to)], Interpolation::Linear)
    }

    /// Sits at `first` until `switch_time`, then at `second` until `end`.
    pub fn switch(first: Position, second: Position, switch_time: f64, end: f64) -> Result<Self> {
        Self::new(
            vec![(0.0, first), (switch_time, second), (end, second)],
            Interpolation::Hold,
        )
    }

    pub fn waypoints(&self) -> &[(f64, Position)] {
        &self.waypoints
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn start(&self) -> f64 {
        self.waypoints[0].0
    }

    pub fn end(&self) -> f64 {
        self.waypoints[self.waypoints.len() - 1].0
    }

    /// Position at time `t`, clamped to the end points.
    pub fn position_at(&self, t: f64) -> Position {
        let w = &self.waypoints;
        if t <= w[0].0 {
            return w[0].1;
        }
        if t >= self.end() {
            return w[w.len() - 1].1;
        }
        let i = w.partition_point(|(ti, _)| *ti <= t) - 1;
        let (t0, p0) = w[i];
        let (t1, p1) = w[i + 1];
        match self.interpolation {
            Interpolation::Hold => p0,
            Interpolation::Linear => {
                let u = (t - t0) / (t1 - t0);
                [
                    p0[0] + u * (p1[0] - p0[0]),
                    p0[1] + u * (p1[1] - p0[1]),
                    p0[2] + u * (p1[2] - p0[2]),
                ]
            }
        }
    }

    pub fn path_length(&self) -> f64 {
        self.waypoints.windows(2).map(|w| distance(&w[0].1, &w[1].1)).sum()
    }
}

/// A static room layout: array plus fixed source positions.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub room: Room,
    pub array: ArrayGeometry,
    pub sources: Vec<Position>,
    pub rir: RirOptions,
}

impl Scene {
    pub fn validate(&self) -> Result<()> {
        self.room.validate()?;
        self.array.check_inside(&self.room)?;
        for (s, p) in self.sources.iter().enumerate() {
            self.room.check_inside(p, &format!("source {s}"))?;
        }
        Ok(())
    }

    /// RIRs indexed `[source][mic]`.
    pub fn rirs(&self) -> Result<Vec<Vec<Vec<f64>>>> {
        self.validate()?;
        self.sources
            .iter()
            .map(|s| image_rirs(&self.room, s, &self.array, &self.rir))
            .collect()
    }
}

/// Default evaluation layout: 4-mic UCA of radius 0.1 m centred at
/// (2.3, 2.45, 1.1) in a 6 × 5.5 × 4.5 m room.
pub mod layout {
    use super::Position;

    pub const ARRAY_CENTER: Position = [2.3, 2.45, 1.1];
    pub const ARRAY_RADIUS: f64 = 0.1;
    pub const ARRAY_MICS: usize = 4;
    /// Desired talker, 1 m at 90°.
    pub const POSITION_A: Position = [2.3, 3.45, 1.1];
    /// Interferer, 1 m at 45°.
    pub const POSITION_B: Position = [3.007, 3.157, 1.1];
    /// Start of the moving-talker path, 2.95 m from mic 0.
    pub const POSITION_D: Position = [4.058, 4.890, 1.1];
    /// End of the moving-talker path, 2.5 m from D and 1 m from mic 0 at
    /// 110°. The distance to mic 0 shrinks monotonically along D→C.
    pub const POSITION_C: Position = [2.058, 3.390, 1.1];
}
