//! Direct-path power, distance equalization and pattern matching.

use serde::{Deserialize, Serialize};

use crate::dsp::interpolate_at;
use crate::error::{Error, Result};
use crate::locate::DeviceLayout;
use crate::num::pearson;
use crate::scene::{Point, RadiationPattern};
use crate::ImpulseResponse;

/// Default first-peak threshold as a fraction of the channel maximum.
pub const DEFAULT_PEAK_FRACTION: f64 = 0.3;
/// Default search span before the strongest tap, seconds.
pub const DEFAULT_FIRST_PEAK_SECS: f64 = 0.02;
/// A peak must dominate this many seconds on either side. Ringing of the
/// deconvolved main lobe sits closer than this; distinct paths sit further.
pub const PEAK_RESOLUTION_SECS: f64 = 2e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LosPower {
    /// `A_i`, band-limited peak height of the first peak.
    pub amplitudes: Vec<f64>,
    /// `A_i^2`.
    pub powers: Vec<f64>,
    /// Tap index of each first peak.
    pub peak_taps: Vec<usize>,
    /// Devices whose channel had no positive tap; their power is 0.
    pub nonpositive: Vec<usize>,
}

/// Height of the band-limited curve through `taps` near integer index `k`.
fn refined_peak(taps: &[f64], k: usize) -> f64 {
    let mut best = taps[k];
    for step in -25..=25 {
        let pos = k as f64 + step as f64 * 0.02;
        best = best.max(interpolate_at(taps, pos));
    }
    best
}

/// First local maximum reaching `fraction * max` within `window` taps
/// before (and including) the strongest tap. A local maximum must be the
/// largest tap within `resolution` taps on either side.
pub fn first_peak(taps: &[f64], fraction: f64, window: usize, resolution: usize) -> Option<(usize, f64)> {
    let (top, max) = crate::dsp::argmax(taps);
    if taps.is_empty() || max <= 0.0 {
        return None;
    }
    let threshold = fraction * max;
    let start = top.saturating_sub(window);
    let r = resolution.max(1);
    let k = (start..=top)
        .find(|&k| {
            let around = &taps[k.saturating_sub(r)..(k + r + 1).min(taps.len())];
            taps[k] >= threshold && around.iter().all(|&t| t <= taps[k])
        })
        .unwrap_or(top);
    Some((k, refined_peak(taps, k)))
}

/// `P_i = A_i^2` with `A_i` the first peak of each channel.
pub fn extract_los_power(channels: &[ImpulseResponse], fraction: f64, window_secs: f64) -> LosPower {
    let mut out =
        LosPower { amplitudes: Vec::new(), powers: Vec::new(), peak_taps: Vec::new(), nonpositive: Vec::new() };
    for (i, h) in channels.iter().enumerate() {
        let fs = h.sample_rate() as f64;
        let window = (window_secs * fs).round() as usize;
        let resolution = (PEAK_RESOLUTION_SECS * fs).round() as usize;
        match first_peak(h.taps(), fraction, window, resolution) {
            Some((k, a)) => {
                out.amplitudes.push(a);
                out.powers.push(a * a);
                out.peak_taps.push(k);
            }
            None => {
                out.amplitudes.push(0.0);
                out.powers.push(0.0);
                out.peak_taps.push(0);
                out.nonpositive.push(i);
            }
        }
    }
    out
}

/// `P*_i = P_i d_i^2`.
pub fn equalize(powers: &[f64], distances: &[f64]) -> Result<Vec<f64>> {
    if powers.len() != distances.len() {
        return Err(Error::LengthMismatch(format!("{} powers for {} distances", powers.len(), distances.len())));
    }
    if let Some(i) = distances.iter().position(|d| !(d.is_finite() && *d > 0.0)) {
        return Err(Error::InvalidInput(format!("distance {i} is not positive: {}", distances[i])));
    }
    Ok(powers.iter().zip(distances).map(|(p, d)| p * d * d).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternMatch {
    pub device_index: usize,
    /// Pearson correlation of `P*` with the pattern facing each device.
    pub correlations: Vec<f64>,
}

/// Gains the pattern predicts at each device when the user at `user` faces `towards`.
pub fn expected_gains(
    layout: &DeviceLayout,
    user: Point,
    towards: usize,
    pattern: &RadiationPattern,
    exponent: f64,
) -> Vec<f64> {
    let facing = (layout.devices[towards].position - user).angle();
    layout.devices.iter().map(|d| pattern.gain((d.position - user).angle() - facing).powf(exponent)).collect()
}

/// Picks the device whose facing hypothesis best explains `p_star`.
///
/// Ties (within 1e-12) go to the larger `P*_k`, then the smaller index.
pub fn match_pattern(
    p_star: &[f64],
    layout: &DeviceLayout,
    user: Point,
    pattern: &RadiationPattern,
    exponent: f64,
) -> Result<PatternMatch> {
    let n = layout.len();
    if p_star.len() != n {
        return Err(Error::LengthMismatch(format!("{} powers for {n} devices", p_star.len())));
    }
    if n == 0 {
        return Err(Error::InvalidInput("no devices".into()));
    }
    if n == 1 {
        return Ok(PatternMatch { device_index: 0, correlations: vec![1.0] });
    }
    if let Some(i) = layout.devices.iter().position(|d| d.position.dist(user) < 1e-9) {
        return Err(Error::InvalidInput(format!("user coincides with device {i}")));
    }
    let correlations: Vec<f64> =
        (0..n).map(|k| pearson(p_star, &expected_gains(layout, user, k, pattern, exponent))).collect();
    let mut best = 0;
    for k in 1..n {
        let (c, b) = (correlations[k], correlations[best]);
        if c > b + 1e-12 || ((c - b).abs() <= 1e-12 && p_star[k] > p_star[best]) {
            best = k;
        }
    }
    Ok(PatternMatch { device_index: best, correlations })
}
