//! Room geometry, device and user poses, microphone layout and the scenario
//! config file.
//!
//! The world is planar. Angles are radians, counter-clockwise from +x.
//! A device's `orientation` is the global heading of its array's 0 reference,
//! which is also the direction of its first microphone.

mod pattern;

pub(crate) use pattern::omni;
pub use pattern::{builtin_patterns, pattern_gain, PatternId, RadiationPattern, PATTERN_BINS};

use std::f64::consts::TAU;
use std::ops::{Add, Mul, Sub};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::wrap_pi;

/// Speed of sound, m/s.
pub const SPEED_OF_SOUND: f64 = 343.0;
pub const DEFAULT_ARRAY_RADIUS: f64 = 0.046;
pub const DEFAULT_MIC_COUNT: usize = 6;
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Planar point or vector in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_polar(r: f64, angle: f64) -> Self {
        Self::new(r * angle.cos(), r * angle.sin())
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Heading of the vector, radians in `(-pi, pi]`.
    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn dist(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn cross(self, other: Point) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn rotated(self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

/// Device placement and its uniform circular microphone array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DevicePose {
    /// Array centre, meters.
    pub position: Point,
    /// Global heading of the array's 0 reference, radians.
    pub orientation: f64,
    #[serde(default = "default_mic_count")]
    pub mic_count: usize,
    /// Meters.
    #[serde(default = "default_array_radius")]
    pub array_radius: f64,
}

fn default_mic_count() -> usize {
    DEFAULT_MIC_COUNT
}

fn default_array_radius() -> f64 {
    DEFAULT_ARRAY_RADIUS
}

impl DevicePose {
    pub fn new(position: Point, orientation: f64) -> Self {
        Self { position, orientation, mic_count: DEFAULT_MIC_COUNT, array_radius: DEFAULT_ARRAY_RADIUS }
    }

    pub fn with_array(mut self, mic_count: usize, array_radius: f64) -> Self {
        self.mic_count = mic_count;
        self.array_radius = array_radius;
        self
    }

    /// Microphone offsets from the array centre in the device frame.
    pub fn local_mic_offsets(&self) -> Vec<Point> {
        let m = self.mic_count;
        (0..m).map(|j| Point::from_polar(self.array_radius, TAU * j as f64 / m as f64)).collect()
    }

    pub fn validate(&self, field: &str) -> Result<()> {
        if !self.position.is_finite() {
            return Err(Error::scene(format!("{field}.position"), "must be finite"));
        }
        if !self.orientation.is_finite() {
            return Err(Error::scene(format!("{field}.orientation"), "must be finite"));
        }
        if self.mic_count < 4 {
            return Err(Error::scene(
                format!("{field}.mic_count"),
                format!("needs at least 4 microphones, got {}", self.mic_count),
            ));
        }
        if !(self.array_radius.is_finite() && self.array_radius > 0.0) {
            return Err(Error::scene(format!("{field}.array_radius"), "must be positive"));
        }
        Ok(())
    }
}

/// Global microphone positions: evenly spaced on the array circle, first mic at the orientation heading.
pub fn mic_positions(d: &DevicePose) -> Vec<Point> {
    d.local_mic_offsets().into_iter().map(|o| d.position + o.rotated(d.orientation)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserPose {
    /// Meters.
    pub position: Point,
    /// Global facing direction, radians in `[0, 2pi)`.
    pub facing: f64,
    /// Source level in dB relative to unit amplitude.
    #[serde(default)]
    pub loudness_db: f64,
    /// Radiation pattern of the talker.
    #[serde(default)]
    pub pattern: PatternId,
}

/// Rectangular room `[0, width] x [0, depth]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Room {
    /// Meters along x.
    pub width: f64,
    /// Meters along y.
    pub depth: f64,
    /// Wall absorption in `[0, 1]`; each bounce scales amplitude by `1 - absorption`.
    pub absorption: f64,
}

impl Room {
    pub fn contains(&self, p: Point) -> bool {
        p.x >= 0.0 && p.x <= self.width && p.y >= 0.0 && p.y <= self.depth
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Gaussian,
    #[default]
    SpeechLike,
    Chirp,
}

impl SourceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceKind::Gaussian => "gaussian",
            SourceKind::SpeechLike => "speech_like",
            SourceKind::Chirp => "chirp",
        }
    }
}

impl std::str::FromStr for SourceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(SourceKind::Gaussian),
            "speech_like" => Ok(SourceKind::SpeechLike),
            "chirp" => Ok(SourceKind::Chirp),
            _ => Err(Error::InvalidInput(format!("unknown source kind '{s}'"))),
        }
    }
}

/// Independent white Gaussian noise on every microphone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Noise power in dB relative to unit variance; `-inf` disables noise.
    pub floor_db: f64,
    /// When set, the floor is calibrated so the recording's measured
    /// (signal+noise)/noise ratio hits this value in dB; `floor_db` is ignored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_snr_tilde_db: Option<f64>,
}

impl NoiseSpec {
    pub const OFF: NoiseSpec = NoiseSpec { floor_db: f64::NEG_INFINITY, target_snr_tilde_db: None };

    pub fn target(snr_tilde_db: f64) -> Self {
        Self { floor_db: f64::NEG_INFINITY, target_snr_tilde_db: Some(snr_tilde_db) }
    }

    pub fn is_off(&self) -> bool {
        self.target_snr_tilde_db.is_none() && self.floor_db == f64::NEG_INFINITY
    }
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::OFF
    }
}

/// Complete scenario: room, devices, user, source and noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    /// Hz.
    #[serde(default = "default_sample_rate")]
    pub sample_rate: u32,
    pub seed: u64,
    pub source: SourceKind,
    /// Source duration in seconds.
    pub duration: f64,
    /// Silence before the source starts, seconds.
    #[serde(default = "default_pre_roll")]
    pub pre_roll: f64,
    /// Image-source reflection order, 0..=3.
    #[serde(default = "default_reflection_order")]
    pub reflection_order: u32,
    pub room: Room,
    #[serde(default)]
    pub noise: NoiseSpec,
    pub user: UserPose,
    pub devices: Vec<DevicePose>,
}

fn default_sample_rate() -> u32 {
    DEFAULT_SAMPLE_RATE
}

fn default_pre_roll() -> f64 {
    0.1
}

fn default_reflection_order() -> u32 {
    2
}

impl Scene {
    pub fn device_count(&self) -> usize {
        self.devices.len()
    }

    pub fn pre_roll_samples(&self) -> usize {
        (self.pre_roll * self.sample_rate as f64).round() as usize
    }

    /// Global bearing from the user to device `i`.
    pub fn bearing_to_device(&self, i: usize) -> f64 {
        (self.devices[i].position - self.user.position).angle()
    }

    /// Device whose bearing from the user is closest to the facing direction.
    pub fn facing_device(&self) -> usize {
        let mut best = (0, f64::INFINITY);
        for i in 0..self.devices.len() {
            let err = wrap_pi(self.bearing_to_device(i) - self.user.facing).abs();
            if err < best.1 {
                best = (i, err);
            }
        }
        best.0
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(Error::scene("sample_rate", "must be positive"));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::scene("duration", "must be positive"));
        }
        if !(self.pre_roll.is_finite() && self.pre_roll >= 0.0) {
            return Err(Error::scene("pre_roll", "must be non-negative"));
        }
        if self.reflection_order > 3 {
            return Err(Error::scene("reflection_order", format!("must be in 0..=3, got {}", self.reflection_order)));
        }
        let r = &self.room;
        if !(r.width.is_finite() && r.width > 0.0) {
            return Err(Error::scene("room.width", "must be positive"));
        }
        if !(r.depth.is_finite() && r.depth > 0.0) {
            return Err(Error::scene("room.depth", "must be positive"));
        }
        if !(0.0..=1.0).contains(&r.absorption) {
            return Err(Error::scene("room.absorption", "must be in [0, 1]"));
        }
        if self.noise.floor_db.is_nan() || self.noise.floor_db == f64::INFINITY {
            return Err(Error::scene("noise.floor_db", "must be finite or -inf"));
        }
        if let Some(t) = self.noise.target_snr_tilde_db {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::scene("noise.target_snr_tilde_db", "must be a positive finite dB value"));
            }
        }
        let u = &self.user;
        if !u.position.is_finite() || !r.contains(u.position) {
            return Err(Error::scene("user.position", "outside the room"));
        }
        if !(u.facing.is_finite() && (0.0..TAU).contains(&u.facing)) {
            return Err(Error::scene("user.facing", "must be in [0, 2pi)"));
        }
        if !u.loudness_db.is_finite() {
            return Err(Error::scene("user.loudness_db", "must be finite"));
        }
        if self.devices.len() < 2 {
            return Err(Error::scene("devices", format!("need at least 2 devices, got {}", self.devices.len())));
        }
        for (i, d) in self.devices.iter().enumerate() {
            let field = format!("devices[{i}]");
            d.validate(&field)?;
            if !r.contains(d.position) {
                return Err(Error::scene(format!("{field}.position"), "outside the room"));
            }
        }
        Ok(())
    }

    /// Parses and validates a scenario from TOML text.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let scene: Scene = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn close(a: Point, b: Point) -> bool {
        a.dist(b) < 1e-12
    }

    #[test]
    fn four_mic_layout() {
        let d = DevicePose::new(Point::new(0.0, 0.0), 0.0).with_array(4, 1.0);
        let m = mic_positions(&d);
        let want = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)];
        for (p, (x, y)) in m.iter().zip(want) {
            assert!(close(*p, Point::new(x, y)), "{p:?}");
        }
    }

    #[test]
    fn six_mics_sixty_degrees_apart() {
        let d = DevicePose::new(Point::new(1.0, 2.0), 0.3);
        let m = mic_positions(&d);
        for j in 0..6 {
            let a = (m[j] - d.position).angle();
            let b = (m[(j + 1) % 6] - d.position).angle();
            assert!((wrap_pi(b - a) - PI / 3.0).abs() < 1e-12);
            assert!(((m[j] - d.position).norm() - d.array_radius).abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_by_pi() {
        let c = Point::new(0.5, -1.0);
        let a = mic_positions(&DevicePose::new(c, 0.2));
        let b = mic_positions(&DevicePose::new(c, 0.2 + PI));
        for (p, q) in a.iter().zip(&b) {
            assert!(close(c + (*p - c).rotated(PI), *q));
        }
    }

    pub(crate) fn sample_scene() -> Scene {
        Scene {
            sample_rate: 16000,
            seed: 3,
            source: SourceKind::Gaussian,
            duration: 0.5,
            pre_roll: 0.1,
            reflection_order: 1,
            room: Room { width: 5.0, depth: 4.0, absorption: 0.5 },
            noise: NoiseSpec::OFF,
            user: UserPose {
                position: Point::new(2.5, 2.0),
                facing: 0.0,
                loudness_db: 0.0,
                pattern: PatternId::Cardioid,
            },
            devices: vec![DevicePose::new(Point::new(4.5, 2.0), 0.0), DevicePose::new(Point::new(0.5, 2.0), 1.0)],
        }
    }

    #[test]
    fn toml_round_trip_with_disabled_noise() {
        let s = sample_scene();
        let text = s.to_toml_string().unwrap();
        assert!(text.contains("-inf"), "{text}");
        let back = Scene::from_toml_str(&text).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_toml_string().unwrap(), text);
    }

    #[test]
    fn rejects_unknown_keys() {
        let mut text = sample_scene().to_toml_string().unwrap();
        text = text.replacen("seed = 3", "seed = 3\nbogus = 1", 1);
        assert!(matches!(Scene::from_toml_str(&text), Err(Error::Parse(_))));
    }

    #[test]
    fn out_of_room_device_names_field() {
        let mut s = sample_scene();
        s.devices[1].position = Point::new(9.0, 1.0);
        match s.validate() {
            Err(Error::InvalidScene { field, .. }) => assert_eq!(field, "devices[1].position"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn too_few_mics_rejected() {
        let mut s = sample_scene();
        s.devices[0].mic_count = 3;
        assert!(s.validate().is_err());
    }

    #[test]
    fn facing_device_is_nearest_bearing() {
        let s = sample_scene();
        assert_eq!(s.facing_device(), 0);
    }
}
