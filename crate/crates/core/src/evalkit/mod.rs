//! Metrics, seeded scene generation and the Monte-Carlo studies.

mod bench;
mod studies;

pub use bench::{
    read_trials_csv, run_benchmark, run_pattern_swap, run_trial, write_summary_json, write_trials_csv, BenchmarkResult,
    BucketAccuracy, SuiteConfig, Summary, TrialResult, SCHEMA_VERSION, SEPARATION_BUCKETS, TRIAL_CSV_HEADER,
};
pub use studies::{
    converge_study, p2p_errors, triangulation_errors, write_converge_csv, ConvergeConfig, ConvergeRow,
    CONVERGE_CSV_HEADER,
};

use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::locate::DeviceLayout;
use crate::num::{wrap_pi, wrap_two_pi};
use crate::scene::{DevicePose, NoiseSpec, PatternId, Point, Room, Scene, SourceKind, UserPose};
use crate::simulate::Observations;

/// Length of the noise-only window used by [`snr_tilde_db`], seconds.
pub const NOISE_WINDOW_SECS: f64 = 0.1;

fn bearing(layout: &DeviceLayout, user: Point, i: usize) -> f64 {
    (layout.devices[i].position - user).angle()
}

/// Angle at the user between the true and chosen devices, degrees in `[0, 180]`.
pub fn fde(layout: &DeviceLayout, user: Point, true_k: usize, chosen_k: usize) -> f64 {
    if true_k == chosen_k {
        return 0.0;
    }
    wrap_pi(bearing(layout, user, chosen_k) - bearing(layout, user, true_k)).abs().to_degrees()
}

/// 0 when correct, otherwise 1 plus the number of devices whose bearing lies
/// strictly between the two along the shorter arc. A device at exactly the
/// same bearing as either end does not count.
pub fn fie(layout: &DeviceLayout, user: Point, true_k: usize, chosen_k: usize) -> usize {
    if true_k == chosen_k {
        return 0;
    }
    let from = bearing(layout, user, true_k);
    let span = wrap_pi(bearing(layout, user, chosen_k) - from);
    let between = |sign: f64, width: f64| {
        (0..layout.len())
            .filter(|&i| i != true_k && i != chosen_k)
            .filter(|&i| {
                let off = wrap_two_pi(sign * (bearing(layout, user, i) - from));
                off > 0.0 && off < width
            })
            .count()
    };
    let count = if span.abs() >= std::f64::consts::PI {
        between(1.0, span.abs()).min(between(-1.0, span.abs()))
    } else {
        between(span.signum(), span.abs())
    };
    1 + count
}

/// Smallest angle at the user between device `k` and any other device, degrees.
pub fn separation_deg(layout: &DeviceLayout, user: Point, k: usize) -> f64 {
    (0..layout.len())
        .filter(|&i| i != k)
        .map(|i| wrap_pi(bearing(layout, user, i) - bearing(layout, user, k)).abs().to_degrees())
        .fold(180.0, f64::min)
}

/// Measured (signal+noise)/noise in dB: mean power after `onset` over the
/// mean power of the first 100 ms (or everything before `onset` if shorter).
pub fn snr_tilde_db(obs: &Observations, onset: usize) -> f64 {
    let fs = obs.sample_rate() as f64;
    let noise_end = ((NOISE_WINDOW_SECS * fs).round() as usize).min(onset);
    let noise = crate::simulate::mean_power(&obs.devices, 0, noise_end);
    let total = crate::simulate::mean_power(&obs.devices, onset, usize::MAX);
    10.0 * (total / noise).log10()
}

/// Knobs for [`random_scene`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneParams {
    pub devices: usize,
    pub reflection_order: u32,
    pub absorption: f64,
    /// `None` disables noise.
    pub snr_tilde_db: Option<f64>,
    pub source: SourceKind,
    pub pattern: PatternId,
    /// Minimum angle at the user between any two devices, degrees.
    pub min_separation_deg: f64,
    /// Seconds.
    pub duration: f64,
    /// Room width and depth ranges, meters.
    pub width: (f64, f64),
    pub depth: (f64, f64),
    /// User-to-device distance range, meters.
    pub distance: (f64, f64),
    /// Standard deviation of the user's facing around the target device, degrees.
    pub facing_jitter_deg: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            devices: 4,
            reflection_order: 2,
            absorption: 0.5,
            snr_tilde_db: Some(30.0),
            source: SourceKind::SpeechLike,
            pattern: PatternId::Cardioid,
            min_separation_deg: 0.0,
            duration: 1.0,
            width: (5.0, 8.0),
            depth: (4.0, 6.0),
            distance: (1.0, 2.5),
            facing_jitter_deg: 0.0,
        }
    }
}

/// Draws a room, a user and devices around the user, and points the user at
/// one of them. Deterministic in the RNG state.
pub fn random_scene(params: &SceneParams, seed: u64, rng: &mut impl Rng) -> Scene {
    loop {
        let w = rng.random_range(params.width.0..=params.width.1);
        let d = rng.random_range(params.depth.0..=params.depth.1);
        let margin = params.distance.0.min(1.2);
        let user = Point::new(rng.random_range(margin..w - margin), rng.random_range(margin..d - margin));
        let mut bearings: Vec<f64> = Vec::with_capacity(params.devices);
        let mut devices = Vec::with_capacity(params.devices);
        for _ in 0..2000 {
            if devices.len() == params.devices {
                break;
            }
            let b = rng.random_range(0.0..TAU);
            let r = rng.random_range(params.distance.0..=params.distance.1);
            let orientation = rng.random_range(0.0..TAU);
            if bearings.iter().any(|&x| wrap_pi(x - b).abs().to_degrees() < params.min_separation_deg) {
                continue;
            }
            let p = user + Point::from_polar(r, b);
            if !(p.x > 0.3 && p.x < w - 0.3 && p.y > 0.3 && p.y < d - 0.3) {
                continue;
            }
            bearings.push(b);
            devices.push(DevicePose::new(p, orientation));
        }
        if devices.len() < params.devices {
            continue;
        }
        let target = rng.random_range(0..params.devices);
        let jitter = if params.facing_jitter_deg > 0.0 {
            rng.random_range(-1.0..1.0) * params.facing_jitter_deg.to_radians()
        } else {
            0.0
        };
        return Scene {
            sample_rate: crate::scene::DEFAULT_SAMPLE_RATE,
            seed,
            source: params.source,
            duration: params.duration,
            pre_roll: 0.1,
            reflection_order: params.reflection_order,
            room: Room { width: w, depth: d, absorption: params.absorption },
            noise: params.snr_tilde_db.map(NoiseSpec::target).unwrap_or(NoiseSpec::OFF),
            user: UserPose {
                position: user,
                facing: wrap_two_pi(bearings[target] + jitter),
                loudness_db: 0.0,
                pattern: params.pattern,
            },
            devices,
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Devices on a unit circle around the origin at the given bearings (degrees).
    fn fan(bearings: &[f64]) -> DeviceLayout {
        DeviceLayout::from_devices(
            bearings.iter().map(|b| DevicePose::new(Point::from_polar(2.0, b.to_radians()), 0.0)).collect(),
        )
    }

    #[test]
    fn fde_basics() {
        let l = fan(&[0.0, 90.0, 200.0]);
        let o = Point::new(0.0, 0.0);
        assert_eq!(fde(&l, o, 1, 1), 0.0);
        assert!((fde(&l, o, 0, 1) - 90.0).abs() < 1e-9);
        assert!((fde(&l, o, 0, 2) - 160.0).abs() < 1e-9);
        assert_eq!(fde(&l, o, 0, 2), fde(&l, o, 2, 0));
    }

    #[test]
    fn fie_counts_intervening_devices() {
        let l = fan(&[0.0, 30.0, 60.0, 180.0]);
        let o = Point::new(0.0, 0.0);
        assert_eq!(fie(&l, o, 0, 0), 0);
        assert_eq!(fie(&l, o, 0, 1), 1);
        assert_eq!(fie(&l, o, 0, 2), 2);
        assert_eq!(fie(&l, o, 2, 0), 2);
        // shorter arc from 60 to 180 holds nothing
        assert_eq!(fie(&l, o, 2, 3), 1);
    }

    #[test]
    fn removing_intervening_device_reduces_fie_only() {
        let o = Point::new(0.0, 0.0);
        let full = fan(&[0.0, 40.0, 80.0]);
        let reduced = fan(&[0.0, 80.0]);
        assert_eq!(fie(&full, o, 0, 2) - fie(&reduced, o, 0, 1), 1);
        assert_eq!(fde(&full, o, 0, 2), fde(&reduced, o, 0, 1));
    }

    #[test]
    fn bearing_ties_are_not_between() {
        let o = Point::new(0.0, 0.0);
        let mut l = fan(&[0.0, 50.0]);
        l.devices.push(DevicePose::new(Point::from_polar(3.0, 50f64.to_radians()), 0.0));
        assert_eq!(fie(&l, o, 0, 1), 1);
    }

    #[test]
    fn snr_tilde_matches_calibration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut errs = Vec::new();
        for t in 0..50 {
            let params =
                SceneParams { reflection_order: 0, duration: 0.4, snr_tilde_db: Some(30.0), ..SceneParams::default() };
            let scene = random_scene(&params, t, &mut rng);
            let (obs, truth) = crate::simulate::record(&scene).unwrap();
            errs.push((snr_tilde_db(&obs, truth.onset) - 30.0).abs());
        }
        let worst = errs.iter().copied().fold(0.0, f64::max);
        assert!(worst <= 1.0, "{worst}");
    }

    #[test]
    fn generated_scenes_respect_constraints() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let params = SceneParams { devices: 6, min_separation_deg: 45.0, ..SceneParams::default() };
        for t in 0..20 {
            let s = random_scene(&params, t, &mut rng);
            s.validate().unwrap();
            let l = DeviceLayout::from_scene(&s);
            for k in 0..6 {
                assert!(separation_deg(&l, s.user.position, k) >= 45.0 - 1e-9);
            }
            let k = s.facing_device();
            assert!(wrap_pi(s.user.facing - bearing(&l, s.user.position, k)).abs() < 1e-9);
        }
    }
}
