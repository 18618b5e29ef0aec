//! Directional voice gain curves.
//!
//! The built-in curves are synthetic stand-ins with the coarse shape of a
//! human talker: a frontal lobe and a weaker rear hemisphere.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::wrap_two_pi;

/// Degree bins in a pattern.
pub const PATTERN_BINS: usize = 360;

/// Linear amplitude gain per degree of departure angle (0 = facing direction).
#[derive(Debug, Clone, PartialEq)]
pub struct RadiationPattern {
    name: String,
    gains: Vec<f64>,
}

impl RadiationPattern {
    pub fn new(name: impl Into<String>, gains: Vec<f64>) -> Result<Self> {
        if gains.len() != PATTERN_BINS {
            return Err(Error::InvalidInput(format!("pattern needs {PATTERN_BINS} gains, got {}", gains.len())));
        }
        if let Some(i) = gains.iter().position(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::InvalidInput(format!("pattern gain at {i} deg must be positive and finite")));
        }
        let peak = peak_degree(&gains);
        if !(peak <= 30 || peak >= 330) {
            return Err(Error::InvalidInput(format!(
                "pattern peaks at {peak} deg, outside the frontal +/-30 deg lobe"
            )));
        }
        Ok(Self { name: name.into(), gains })
    }

    /// Samples `f(theta)` at every whole degree.
    pub fn from_fn(name: impl Into<String>, f: impl Fn(f64) -> f64) -> Result<Self> {
        let gains = (0..PATTERN_BINS).map(|d| f((d as f64).to_radians())).collect();
        Self::new(name, gains)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    /// Gain at `departure_angle` radians, linear between neighbouring degree bins, 2pi-periodic.
    pub fn gain(&self, departure_angle: f64) -> f64 {
        pattern_gain(self, departure_angle)
    }
}

fn peak_degree(gains: &[f64]) -> usize {
    let mut best = 0;
    for (i, &g) in gains.iter().enumerate() {
        if g > gains[best] {
            best = i;
        }
    }
    best
}

/// Linear interpolation between the two nearest degree bins; periodic in 2pi.
pub fn pattern_gain(p: &RadiationPattern, departure_angle: f64) -> f64 {
    debug_assert!(departure_angle.is_finite());
    let deg = wrap_two_pi(departure_angle) * 180.0 / PI;
    let lo = deg.floor();
    let t = deg - lo;
    let i = (lo as usize) % PATTERN_BINS;
    let j = (i + 1) % PATTERN_BINS;
    p.gains[i] * (1.0 - t) + p.gains[j] * t
}

/// Identifiers of the built-in patterns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternId {
    #[default]
    Cardioid,
    Sharp,
    Average,
    Distorted,
}

impl PatternId {
    pub const ALL: [PatternId; 4] = [PatternId::Cardioid, PatternId::Sharp, PatternId::Average, PatternId::Distorted];

    pub fn as_str(self) -> &'static str {
        match self {
            PatternId::Cardioid => "cardioid",
            PatternId::Sharp => "sharp",
            PatternId::Average => "average",
            PatternId::Distorted => "distorted",
        }
    }

    pub fn pattern(self) -> RadiationPattern {
        let cardioid = |t: f64| 0.6 + 0.4 * t.cos();
        let sharp = |t: f64| 0.25 + 0.75 * (0.5 * (1.0 + t.cos())).powi(2);
        let built = match self {
            PatternId::Cardioid => RadiationPattern::from_fn("cardioid", cardioid),
            PatternId::Sharp => RadiationPattern::from_fn("sharp", sharp),
            PatternId::Average => RadiationPattern::from_fn("average", |t| 0.5 * (cardioid(t) + sharp(t))),
            // skewed lobe plus a third-harmonic ripple
            PatternId::Distorted => RadiationPattern::from_fn("distorted", |t| {
                0.6 + 0.4 * (t - 15f64.to_radians()).cos() + 0.08 * (3.0 * t).cos()
            }),
        };
        built.expect("built-in patterns are valid")
    }
}

impl fmt::Display for PatternId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PatternId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PatternId::ALL.into_iter().find(|p| p.as_str() == s).ok_or_else(|| {
            Error::InvalidInput(format!("unknown pattern '{s}' (expected cardioid, sharp, average or distorted)"))
        })
    }
}

/// Default cardioid, a sharper frontal lobe, their average, and a distorted variant.
pub fn builtin_patterns() -> Vec<RadiationPattern> {
    PatternId::ALL.iter().map(|p| p.pattern()).collect()
}

/// Uniform gain; used for loudspeaker chirps.
pub(crate) fn omni() -> RadiationPattern {
    RadiationPattern { name: "omni".into(), gains: vec![1.0; PATTERN_BINS] }
}
