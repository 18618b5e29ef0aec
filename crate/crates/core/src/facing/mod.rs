//! Facing-device inference: local delay-and-sum, blind iterative channel
//! extraction across devices, direct-path power, distance equalization and
//! radiation-pattern matching.

mod channels;
mod power;

pub use channels::{
    divergence_onset, estimate_channels, peak_align_sum, peak_shifts, ChannelParams, Iteration, IterationTrace,
    SourceUpdate,
};
pub use power::{
    equalize, expected_gains, extract_los_power, first_peak, match_pattern, LosPower, PatternMatch,
    DEFAULT_FIRST_PEAK_SECS, DEFAULT_PEAK_FRACTION, PEAK_RESOLUTION_SECS,
};

use serde::Serialize;

use crate::aoa::{estimate_aoa_with, AoaEstimate, AoaParams};
use crate::dsp::delay_sum_aoa;
use crate::error::{Error, Result};
use crate::locate::{triangulate_clustered, DeviceLayout, UserLocation, CLUSTER_EPS, CLUSTER_MIN_PTS};
use crate::scene::{DevicePose, Point, RadiationPattern, SPEED_OF_SOUND};
use crate::simulate::{Observations, MIN_DISTANCE};
use crate::Signal;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferParams {
    pub aoa: AoaParams,
    pub channels: ChannelParams,
    /// First-peak threshold relative to the channel maximum.
    pub peak_fraction: f64,
    /// How far before the strongest tap the first peak may lie, seconds.
    pub first_peak_secs: f64,
    /// Power applied to pattern gains before correlating (2 = power domain).
    pub exponent: f64,
    /// DBSCAN radius for ray intersections, meters.
    pub cluster_eps: f64,
    pub cluster_min_pts: usize,
    /// Keep the full iteration trace in the decision.
    pub keep_trace: bool,
}

impl Default for InferParams {
    fn default() -> Self {
        Self {
            aoa: AoaParams::default(),
            channels: ChannelParams::default(),
            peak_fraction: DEFAULT_PEAK_FRACTION,
            first_peak_secs: DEFAULT_FIRST_PEAK_SECS,
            exponent: 2.0,
            cluster_eps: CLUSTER_EPS,
            cluster_min_pts: CLUSTER_MIN_PTS,
            keep_trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FacingDecision {
    pub device_index: usize,
    pub user_location: UserLocation,
    /// Per-device direction estimates, device frame.
    #[serde(serialize_with = "angles_only")]
    pub aoas: Vec<AoaEstimate>,
    /// From the located user to each device, meters.
    pub distances: Vec<f64>,
    pub los: LosPower,
    /// `P*`.
    pub equalized_powers: Vec<f64>,
    pub correlations: Vec<f64>,
    pub pattern: String,
    pub iterations_used: usize,
    pub converged: bool,
    pub diverged: bool,
    #[serde(skip)]
    pub trace: Option<IterationTrace>,
}

fn angles_only<S: serde::Serializer>(aoas: &[AoaEstimate], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(aoas.len()))?;
    for a in aoas {
        seq.serialize_element(&serde_json::json!({ "angle_deg": a.degrees(), "confidence": a.confidence }))?;
    }
    seq.end()
}

/// Column names of [`FacingDecision::csv_record`].
pub const DECISION_CSV_HEADER: [&str; 7] =
    ["device", "aoa_deg", "distance_m", "los_power", "equalized_power", "correlation", "chosen"];

impl FacingDecision {
    /// Re-runs only the pattern match, e.g. with another pattern.
    pub fn rematch(&self, layout: &DeviceLayout, pattern: &RadiationPattern, exponent: f64) -> Result<PatternMatch> {
        match_pattern(&self.equalized_powers, layout, self.user_location.position, pattern, exponent)
    }

    /// One row per device, columns as in [`DECISION_CSV_HEADER`].
    pub fn csv_records(&self) -> Vec<[String; 7]> {
        (0..self.distances.len())
            .map(|i| {
                [
                    i.to_string(),
                    self.aoas[i].degrees().to_string(),
                    self.distances[i].to_string(),
                    self.los.powers[i].to_string(),
                    self.equalized_powers[i].to_string(),
                    self.correlations[i].to_string(),
                    u8::from(i == self.device_index).to_string(),
                ]
            })
            .collect()
    }
}

/// Per-mic delays (samples) that align a plane wave from device-frame `angle`.
pub fn steering_delays(device: &DevicePose, angle: f64, sample_rate: u32) -> Vec<f64> {
    let u = Point::from_polar(1.0, angle);
    device.local_mic_offsets().iter().map(|o| o.dot(u) / SPEED_OF_SOUND * sample_rate as f64).collect()
}

/// Delay-and-sum towards `angle`, divided by the mic count so devices with
/// different arrays stay comparable.
pub fn combine_device(mics: &[Signal], device: &DevicePose, angle: f64) -> Result<Signal> {
    let fs = mics.first().ok_or_else(|| Error::InvalidInput("device has no microphones".into()))?.sample_rate();
    let sum = delay_sum_aoa(mics, &steering_delays(device, angle, fs))?;
    Ok(sum.scaled(1.0 / mics.len() as f64))
}

/// Full pipeline from raw microphone signals to the facing device.
pub fn infer(
    observations: &Observations,
    layout: &DeviceLayout,
    pattern: &RadiationPattern,
    params: &InferParams,
) -> Result<FacingDecision> {
    let n = layout.len();
    if observations.device_count() != n {
        return Err(Error::LengthMismatch(format!(
            "{} recorded devices for {n} in the layout",
            observations.device_count()
        )));
    }
    let aoas = observations
        .devices
        .iter()
        .zip(&layout.devices)
        .map(|(mics, d)| estimate_aoa_with(mics, d, &params.aoa))
        .collect::<Result<Vec<_>>>()?;
    let angles: Vec<f64> = aoas.iter().map(|a| a.angle).collect();
    let location = triangulate_clustered(layout, &angles, params.cluster_eps, params.cluster_min_pts)?;
    let combined = observations
        .devices
        .iter()
        .zip(&layout.devices)
        .zip(&aoas)
        .map(|((mics, d), a)| combine_device(mics, d, a.angle))
        .collect::<Result<Vec<_>>>()?;
    let trace = estimate_channels(&combined, &params.channels)?;
    let los = extract_los_power(trace.channels(), params.peak_fraction, params.first_peak_secs);
    let distances: Vec<f64> =
        layout.devices.iter().map(|d| d.position.dist(location.position).max(MIN_DISTANCE)).collect();
    let equalized_powers = equalize(&los.powers, &distances)?;
    let m = match_pattern(&equalized_powers, layout, location.position, pattern, params.exponent)?;
    Ok(FacingDecision {
        device_index: m.device_index,
        user_location: location,
        aoas,
        distances,
        los,
        equalized_powers,
        correlations: m.correlations,
        pattern: pattern.name().to_string(),
        iterations_used: trace.iterations_used(),
        converged: trace.converged,
        diverged: trace.diverged,
        trace: params.keep_trace.then_some(trace),
    })
}
