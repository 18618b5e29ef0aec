use clap::{Args, ValueEnum};
use serde::Serialize;

use facedir::aoa::{AoaParams, LagInterpolation};
use facedir::facing::{ChannelParams, InferParams, SourceUpdate, DEFAULT_FIRST_PEAK_SECS, DEFAULT_PEAK_FRACTION};
use facedir::locate::{CLUSTER_EPS, CLUSTER_MIN_PTS};
use facedir::scene::{PatternId, SourceKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interp {
    Sinc,
    Parabolic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Update {
    /// Re-estimate the source from the aligned sum of all devices.
    AlignedSum,
    /// Re-estimate the source from the previous source estimate.
    Previous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pattern {
    Cardioid,
    Sharp,
    Average,
    Distorted,
}

impl From<Pattern> for PatternId {
    fn from(p: Pattern) -> Self {
        match p {
            Pattern::Cardioid => PatternId::Cardioid,
            Pattern::Sharp => PatternId::Sharp,
            Pattern::Average => PatternId::Average,
            Pattern::Distorted => PatternId::Distorted,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Gaussian,
    SpeechLike,
    Chirp,
}

impl From<Source> for SourceKind {
    fn from(s: Source) -> Self {
        match s {
            Source::Gaussian => SourceKind::Gaussian,
            Source::SpeechLike => SourceKind::SpeechLike,
            Source::Chirp => SourceKind::Chirp,
        }
    }
}

/// Inference tunables shared by every subcommand that runs the pipeline.
#[derive(Debug, Clone, Args, Serialize)]
pub struct Tunables {
    /// Stop iterating once the source estimate changes by less than this (relative L2)
    #[arg(long, default_value_t = ChannelParams::default().delta)]
    pub delta: f64,
    /// Iteration cap for the channel estimator
    #[arg(long, default_value_t = ChannelParams::default().max_iters)]
    pub max_iters: usize,
    /// Tikhonov regularization relative to the divisor's peak power
    #[arg(long, default_value_t = ChannelParams::default().reg)]
    pub reg: f64,
    /// Channel window length, ms
    #[arg(long, default_value_t = ChannelParams::default().channel_secs * 1e3)]
    pub channel_ms: f64,
    /// Part of the channel window before the zero lag, ms
    #[arg(long, default_value_t = ChannelParams::default().lead_secs * 1e3)]
    pub lead_ms: f64,
    /// Source update rule
    #[arg(long, value_enum, default_value_t = Update::AlignedSum)]
    pub update: Update,
    /// First-peak threshold relative to the channel maximum
    #[arg(long, default_value_t = DEFAULT_PEAK_FRACTION)]
    pub gamma: f64,
    /// How far before the strongest tap the first peak may lie, ms
    #[arg(long, default_value_t = DEFAULT_FIRST_PEAK_SECS * 1e3)]
    pub first_peak_ms: f64,
    /// Power applied to pattern gains before correlating
    #[arg(long, default_value_t = 2.0)]
    pub exponent: f64,
    /// Triangulation cluster radius, meters
    #[arg(long, default_value_t = CLUSTER_EPS)]
    pub eps: f64,
    /// Triangulation minimum cluster size
    #[arg(long, default_value_t = CLUSTER_MIN_PTS)]
    pub min_pts: usize,
    /// Sub-sample lag interpolation for AoA
    #[arg(long, value_enum, default_value_t = Interp::Sinc)]
    pub interpolation: Interp,
}

impl Tunables {
    pub fn params(&self) -> InferParams {
        InferParams {
            aoa: AoaParams {
                interpolation: match self.interpolation {
                    Interp::Sinc => LagInterpolation::Sinc,
                    Interp::Parabolic => LagInterpolation::Parabolic,
                },
                ..AoaParams::default()
            },
            channels: ChannelParams {
                delta: self.delta,
                max_iters: self.max_iters,
                reg: self.reg,
                channel_secs: self.channel_ms * 1e-3,
                lead_secs: self.lead_ms * 1e-3,
                update: match self.update {
                    Update::AlignedSum => SourceUpdate::AlignedSum,
                    Update::Previous => SourceUpdate::Previous,
                },
                ..ChannelParams::default()
            },
            peak_fraction: self.gamma,
            first_peak_secs: self.first_peak_ms * 1e-3,
            exponent: self.exponent,
            cluster_eps: self.eps,
            cluster_min_pts: self.min_pts,
            keep_trace: false,
        }
    }
}
