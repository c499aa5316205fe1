//! Scene files: flat TOML sections `[scene]`, `[array]`, `[method]` and
//! `[metrics]`, with `--set section.key=value` overrides.

use std::path::Path;

use clap::ValueEnum;
use rtf_mclp::batch_derev::{BatchConfig, SdbConfig};
use rtf_mclp::online_derev::OnlineConfig;
use rtf_mclp::rir_sim::{layout, ArrayGeometry, Position, RirOptions, Room, Scene, Trajectory};
use rtf_mclp::speech::Voice;
use rtf_mclp::stft::StftConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    RtfMclp,
    Wpe,
    Cascade,
    Sdb,
    OnlineRtfMclp,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::RtfMclp => "rtf-mclp",
            Method::Wpe => "wpe",
            Method::Cascade => "cascade",
            Method::Sdb => "sdb",
            Method::OnlineRtfMclp => "online-rtf-mclp",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SceneKind {
    /// Fixed sources.
    #[default]
    Static,
    /// Source 0 moves linearly from `source` to `end` over `duration`.
    Moving,
    /// Source 0 jumps from `source` to `end` at `switch_time`.
    Switch,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VoiceName {
    #[default]
    Male,
    Female,
}

impl VoiceName {
    pub fn voice(self) -> Voice {
        match self {
            VoiceName::Male => Voice::MALE,
            VoiceName::Female => Voice::FEMALE,
        }
    }

    pub fn other(self) -> Self {
        match self {
            VoiceName::Male => VoiceName::Female,
            VoiceName::Female => VoiceName::Male,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneSection {
    pub kind: SceneKind,
    pub sample_rate: u32,
    /// Room dimensions in metres.
    pub room: [f64; 3],
    /// Target reverberation time; 0 gives an anechoic room.
    pub rt60: f64,
    pub sound_speed: f64,
    /// Signal length in seconds.
    pub duration: f64,
    pub source: Position,
    /// Second position of a moving or switching source.
    pub end: Option<Position>,
    pub switch_time: Option<f64>,
    pub interferer: Option<Position>,
    /// Desired-to-interferer energy ratio at the reference mic.
    pub sir_db: f64,
    pub voice: VoiceName,
}

impl Default for SceneSection {
    fn default() -> Self {
        let room = Room::default();
        Self {
            kind: SceneKind::Static,
            sample_rate: room.sample_rate,
            room: room.dimensions,
            rt60: room.rt60,
            sound_speed: room.sound_speed,
            duration: 5.0,
            source: layout::POSITION_A,
            end: None,
            switch_time: None,
            interferer: None,
            sir_db: 0.0,
            voice: VoiceName::Male,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArraySection {
    pub center: Position,
    pub radius: f64,
    pub mics: usize,
}

impl Default for ArraySection {
    fn default() -> Self {
        Self {
            center: layout::ARRAY_CENTER,
            radius: layout::ARRAY_RADIUS,
            mics: layout::ARRAY_MICS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MethodSection {
    pub name: Method,
    pub taps: usize,
    pub delay: usize,
    pub iterations: usize,
    pub ar_order: usize,
    pub reference_mic: usize,
    /// Batch desired-PSD floor relative to the recording mean.
    pub gamma_floor: f64,
    /// Online smoothing of the reverberation covariance and the RTF.
    pub alpha: f64,
    pub epsilon: f64,
    pub eta: f64,
    pub rtf_gate: f64,
    pub sdb_loading: f64,
    /// Early part of a measured RIR used for a known RTF, in ms.
    pub known_rtf_ms: f64,
}

impl Default for MethodSection {
    fn default() -> Self {
        let b = BatchConfig::default();
        let o = OnlineConfig::default();
        Self {
            name: Method::RtfMclp,
            taps: b.taps,
            delay: b.delay,
            iterations: b.iterations,
            ar_order: b.ar_order,
            reference_mic: b.reference_mic,
            gamma_floor: b.gamma_floor,
            alpha: o.alpha_noise,
            epsilon: o.epsilon,
            eta: o.eta,
            rtf_gate: o.rtf_gate,
            sdb_loading: SdbConfig::default().loading,
            known_rtf_ms: 8.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    /// Write per-segment CSV tracks.
    pub tracks: bool,
    /// Start of the EDC tail after the direct path, in ms.
    pub tail_ms: f64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            tracks: true,
            tail_ms: 32.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneFile {
    pub scene: SceneSection,
    pub array: ArraySection,
    pub method: MethodSection,
    pub metrics: MetricsSection,
}

/// A parsed scene file with the text it came from, for error positions.
pub struct LoadedScene {
    pub file: SceneFile,
    pub source: String,
    text: String,
    overridden: Vec<String>,
}

fn line_of_span(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses `value` as a TOML value, falling back to a bare string.
fn parse_value(value: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()))
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<String, CliError> {
    let (key, value) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set {assignment}: expected section.key=value")))?;
    let (section, field) = key
        .trim()
        .split_once('.')
        .ok_or_else(|| CliError::Config(format!("--set {assignment}: key must be section.key")))?;
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    let toml::Value::Table(sec) = entry else {
        return Err(CliError::Config(format!("--set {assignment}: {section} is not a section")));
    };
    sec.insert(field.to_string(), parse_value(value.trim()));
    Ok(key.trim().to_string())
}

impl LoadedScene {
    pub fn from_text(text: &str, source: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of_span(text, s.start)).unwrap_or(0);
            CliError::Config(format!("{source}:{line}: {}", e.message()))
        })?;
        let file: SceneFile = toml::from_str(text).map_err(|e| {
            let line = e.span().map(|s| line_of_span(text, s.start)).unwrap_or(0);
            CliError::Config(format!("{source}:{line}: {}", e.message()))
        })?;
        let mut overridden = Vec::new();
        let file = if overrides.is_empty() {
            file
        } else {
            for o in overrides {
                overridden.push(apply_override(&mut table, o)?);
            }
            toml::Value::Table(table)
                .try_into()
                .map_err(|e: toml::de::Error| CliError::Config(format!("--set: {}", e.message())))?
        };
        let scene = Self {
            file,
            source: source.to_string(),
            text: text.to_string(),
            overridden,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                Self::from_text(&text, &p.display().to_string(), overrides)
            }
            None => Self::from_text("", "<defaults>", overrides),
        }
    }

    /// `file:line` of `section.key`, or the override that set it.
    fn locate(&self, section: &str, key: &str) -> String {
        let full = format!("{section}.{key}");
        if self.overridden.contains(&full) {
            return format!("--set {full}");
        }
        let mut current = "";
        for (i, line) in self.text.lines().enumerate() {
            let t = line.trim();
            if let Some(name) = t.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
                current = name.trim();
            } else if current == section && t.split('=').next().map(str::trim) == Some(key) {
                return format!("{}:{}", self.source, i + 1);
            }
        }
        format!("{}: {full}", self.source)
    }

    fn error(&self, section: &str, key: &str, msg: impl std::fmt::Display) -> CliError {
        CliError::Config(format!("{}: {msg}", self.locate(section, key)))
    }

    fn validate(&self) -> Result<(), CliError> {
        let s = &self.file.scene;
        let m = &self.file.method;
        let room = self.room().map_err(|e| self.error("scene", "rt60", e))?;
        room.validate().map_err(|e| self.error("scene", "room", e))?;
        room.check_inside(&s.source, "source").map_err(|e| self.error("scene", "source", e))?;
        if let Some(p) = s.interferer {
            room.check_inside(&p, "interferer").map_err(|e| self.error("scene", "interferer", e))?;
        }
        if !(s.duration > 0.0) {
            return Err(self.error("scene", "duration", "duration must be positive"));
        }
        match s.kind {
            SceneKind::Static => {}
            SceneKind::Moving | SceneKind::Switch => {
                let end = s.end.ok_or_else(|| self.error("scene", "end", "moving and switch scenes need an end position"))?;
                room.check_inside(&end, "end position").map_err(|e| self.error("scene", "end", e))?;
            }
        }
        if s.kind == SceneKind::Switch {
            match s.switch_time {
                Some(t) if t > 0.0 && t < s.duration => {}
                _ => return Err(self.error("scene", "switch_time", "switch_time must lie inside (0, duration)")),
            }
        }
        let array = self.array().map_err(|e| self.error("array", "mics", e))?;
        array.check_inside(&room).map_err(|e| self.error("array", "center", e))?;
        if m.reference_mic >= array.len() {
            return Err(self.error("method", "reference_mic", format!("reference mic {} of {}", m.reference_mic, array.len())));
        }
        Ok(())
    }

    pub fn room(&self) -> rtf_mclp::Result<Room> {
        let s = &self.file.scene;
        let mut room = if s.rt60 == 0.0 {
            Room::anechoic(s.room, s.sample_rate)
        } else {
            Room::new(s.room, s.rt60, s.sample_rate)?
        };
        room.sound_speed = s.sound_speed;
        Ok(room)
    }

    pub fn array(&self) -> rtf_mclp::Result<ArrayGeometry> {
        let a = &self.file.array;
        ArrayGeometry::uca(a.center, a.radius, a.mics)
    }

    /// Static scene with the desired source first and the interferer, if
    /// any, second.
    pub fn static_scene(&self, options: RirOptions) -> rtf_mclp::Result<Scene> {
        let s = &self.file.scene;
        let mut sources = vec![s.source];
        sources.extend(s.interferer);
        Ok(Scene {
            room: self.room()?,
            array: self.array()?,
            sources,
            rir: options,
        })
    }

    /// Path of the desired source; `None` for static scenes.
    pub fn trajectory(&self) -> rtf_mclp::Result<Option<Trajectory>> {
        let s = &self.file.scene;
        let end = s.end.unwrap_or(s.source);
        Ok(match s.kind {
            SceneKind::Static => None,
            SceneKind::Moving => Some(Trajectory::linear(s.source, end, s.duration)?),
            SceneKind::Switch => Some(Trajectory::switch(s.source, end, s.switch_time.unwrap_or(0.0), s.duration)?),
        })
    }

    pub fn stft(&self) -> StftConfig {
        StftConfig {
            sample_rate: self.file.scene.sample_rate,
            ..StftConfig::default()
        }
    }

    pub fn batch(&self) -> BatchConfig {
        let m = &self.file.method;
        BatchConfig {
            taps: m.taps,
            delay: m.delay,
            iterations: m.iterations,
            ar_order: m.ar_order,
            reference_mic: m.reference_mic,
            gamma_floor: m.gamma_floor,
            ..BatchConfig::default()
        }
    }

    pub fn online(&self) -> OnlineConfig {
        let m = &self.file.method;
        OnlineConfig {
            taps: m.taps,
            delay: m.delay,
            ar_order: m.ar_order,
            reference_mic: m.reference_mic,
            alpha_noise: m.alpha,
            alpha_rtf: m.alpha,
            epsilon: m.epsilon,
            eta: m.eta,
            rtf_gate: m.rtf_gate,
            ..OnlineConfig::default()
        }
    }

    pub fn sdb(&self) -> SdbConfig {
        SdbConfig {
            reference_mic: self.file.method.reference_mic,
            sound_speed: self.file.scene.sound_speed,
            loading: self.file.method.sdb_loading,
        }
    }
}
