use std::f64::consts::TAU;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::facing::{combine_device, estimate_channels, extract_los_power, ChannelParams, InferParams};
use crate::locate::{align_similarity, p2p_localize, triangulate_angles, DeviceLayout, Gauge, P2pParams, PairwiseAoas};
use crate::num::{median, pearson, wrap_two_pi};
use crate::scene::{DevicePose, NoiseSpec, PatternId, Point, Room, Scene, SourceKind, UserPose};
use crate::simulate::record;

pub const CONVERGE_CSV_HEADER: [&str; 5] = ["snr", "source", "iteration", "correlation", "median_correlation"];

/// Grid for the first-tap convergence study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergeConfig {
    pub seed: u64,
    /// Scenes per (SNR, source) cell.
    pub trials: usize,
    pub snr_grid_db: Vec<f64>,
    pub sources: Vec<SourceKind>,
    pub devices: usize,
    pub reflection_order: u32,
    pub absorption: f64,
    pub duration: f64,
    /// Iterations reported; the estimator runs exactly this many unless it diverges.
    pub iterations: usize,
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: 100,
            snr_grid_db: vec![30.0, 20.0, 10.0],
            sources: vec![SourceKind::Gaussian, SourceKind::SpeechLike],
            devices: 4,
            reflection_order: 1,
            absorption: 0.5,
            duration: 1.0,
            iterations: 10,
        }
    }
}

/// Seed-averaged first-tap correlation after one iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergeRow {
    pub snr: f64,
    pub source: SourceKind,
    pub iteration: usize,
    pub correlation: f64,
    pub median_correlation: f64,
}

/// Devices anywhere in a random room; the user at least 0.8 m from every
/// device and facing a random direction.
fn converge_scene(cfg: &ConvergeConfig, snr: f64, source: SourceKind, seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rng.random_range(5.0..8.0);
    let d = rng.random_range(4.0..6.0);
    let devices: Vec<DevicePose> = (0..cfg.devices)
        .map(|_| {
            let p = Point::new(rng.random_range(0.4..w - 0.4), rng.random_range(0.4..d - 0.4));
            DevicePose::new(p, rng.random_range(0.0..TAU))
        })
        .collect();
    let user = loop {
        let p = Point::new(rng.random_range(0.8..w - 0.8), rng.random_range(0.8..d - 0.8));
        if devices.iter().all(|x| x.position.dist(p) > 0.8) {
            break p;
        }
    };
    Scene {
        sample_rate: crate::scene::DEFAULT_SAMPLE_RATE,
        seed,
        source,
        duration: cfg.duration,
        pre_roll: 0.1,
        reflection_order: cfg.reflection_order,
        room: Room { width: w, depth: d, absorption: cfg.absorption },
        noise: if snr.is_finite() { NoiseSpec::target(snr) } else { NoiseSpec::OFF },
        user: UserPose {
            position: user,
            facing: rng.random_range(0.0..TAU),
            loudness_db: 0.0,
            pattern: PatternId::Cardioid,
        },
        devices,
    }
}

/// Per-iteration correlation for one scene. Devices are steered with the true
/// AoAs so that only the channel estimator is measured.
fn converge_trial(
    cfg: &ConvergeConfig,
    snr: f64,
    source: SourceKind,
    seed: u64,
    params: &InferParams,
) -> Result<Vec<f64>> {
    let scene = converge_scene(cfg, snr, source, seed);
    let (obs, truth) = record(&scene)?;
    let combined = obs
        .devices
        .iter()
        .zip(&scene.devices)
        .zip(&truth.aoas)
        .map(|((mics, d), &a)| combine_device(mics, d, a))
        .collect::<Result<Vec<_>>>()?;
    let channel_params = ChannelParams { max_iters: cfg.iterations, delta: f64::MIN_POSITIVE, ..params.channels };
    let trace = estimate_channels(&combined, &channel_params)?;
    let mut out = Vec::with_capacity(cfg.iterations);
    let mut last = 0.0;
    for j in 0..cfg.iterations {
        // a diverged run stops early; later iterations repeat its last state
        if let Some(it) = trace.iterations.get(j) {
            let los = extract_los_power(&it.channels, params.peak_fraction, params.first_peak_secs);
            last = pearson(&los.amplitudes, &truth.los_amplitudes);
        }
        out.push(last);
    }
    Ok(out)
}

/// Pearson correlation between estimated and true first-tap amplitudes per
/// iteration, averaged over seeded scenes. Rows are ordered by SNR, source,
/// then iteration, following the config.
pub fn converge_study(cfg: &ConvergeConfig, params: &InferParams, jobs: usize) -> Result<Vec<ConvergeRow>> {
    if cfg.devices < 2 || cfg.iterations == 0 || cfg.trials == 0 {
        return Err(Error::InvalidInput("converge study needs 2+ devices, 1+ iterations and 1+ trials".into()));
    }
    let pool = super::bench::pool(jobs)?;
    let mut rows = Vec::new();
    for &snr in &cfg.snr_grid_db {
        for &source in &cfg.sources {
            let per_trial: Vec<Vec<f64>> = pool.install(|| {
                (0..cfg.trials as u64)
                    .into_par_iter()
                    .map(|t| converge_trial(cfg, snr, source, cfg.seed.wrapping_add(t), params))
                    .collect::<Result<_>>()
            })?;
            for j in 0..cfg.iterations {
                let at: Vec<f64> = per_trial.iter().map(|c| c[j]).collect();
                rows.push(ConvergeRow {
                    snr,
                    source,
                    iteration: j,
                    correlation: at.iter().sum::<f64>() / at.len() as f64,
                    median_correlation: median(&at).unwrap_or(0.0),
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_converge_csv(rows: &[ConvergeRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CONVERGE_CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.snr.to_string(),
            r.source.as_str().to_string(),
            r.iteration.to_string(),
            r.correlation.to_string(),
            r.median_correlation.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `n` devices with random orientations uniformly inside a `side` x `side`
/// square, at least `min_gap` apart.
fn random_devices(n: usize, side: f64, min_gap: f64, rng: &mut impl Rng) -> Vec<DevicePose> {
    let mut out: Vec<DevicePose> = Vec::with_capacity(n);
    while out.len() < n {
        let p = Point::new(rng.random_range(0.0..side), rng.random_range(0.0..side));
        if out.iter().all(|d| d.position.dist(p) >= min_gap) {
            out.push(DevicePose::new(p, rng.random_range(0.0..TAU)));
        }
    }
    out
}

/// Localization error of the user when each device reports its AoA with
/// Gaussian noise of `sigma_deg`. Devices and user are uniform in a
/// `side` x `side` square. Failed triangulations count as infinite error.
pub fn triangulation_errors(devices: usize, sigma_deg: f64, side: f64, trials: usize, seed: u64) -> Vec<f64> {
    let noise = Normal::new(0.0, sigma_deg.to_radians()).expect("finite sigma");
    (0..trials as u64)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t));
            let poses = random_devices(devices, side, 0.5, &mut rng);
            let user = loop {
                let p = Point::new(rng.random_range(0.0..side), rng.random_range(0.0..side));
                if poses.iter().all(|d| d.position.dist(p) >= 0.5) {
                    break p;
                }
            };
            let angles: Vec<f64> = poses
                .iter()
                .map(|d| wrap_two_pi((user - d.position).angle() - d.orientation + noise.sample(&mut rng)))
                .collect();
            let layout = DeviceLayout::from_devices(poses);
            triangulate_angles(&layout, &angles).map_or(f64::INFINITY, |l| l.position.dist(user))
        })
        .collect()
}

/// Post-alignment RMS device position error of peer-to-peer localization
/// from exact pairwise AoAs plus Gaussian noise of `sigma_deg`.
pub fn p2p_errors(devices: usize, sigma_deg: f64, side: f64, trials: usize, seed: u64) -> Result<Vec<f64>> {
    (0..trials as u64)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t));
            let poses = random_devices(devices, side, 0.5, &mut rng);
            let p = PairwiseAoas::from_poses(&poses).perturbed(sigma_deg.to_radians(), &mut rng)?;
            let gauge = Gauge::from_poses(&poses, 0, 1);
            let layout = p2p_localize(&p, &gauge, &P2pParams { seed: t, ..P2pParams::default() })?;
            let truth: Vec<Point> = poses.iter().map(|d| d.position).collect();
            Ok(align_similarity(&layout.positions(), &truth).1)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangulation_is_exact_without_noise() {
        let e = triangulation_errors(4, 0.0, 5.0, 20, 1);
        assert!(e.iter().all(|&x| x < 1e-9), "{e:?}");
    }

    #[test]
    fn p2p_is_exact_without_noise() {
        let e = p2p_errors(5, 0.0, 5.0, 5, 2).unwrap();
        assert!(e.iter().all(|&x| x < 1e-6), "{e:?}");
    }

    #[test]
    fn converge_rows_and_improvement() {
        let cfg = ConvergeConfig {
            trials: 4,
            snr_grid_db: vec![30.0],
            sources: vec![SourceKind::Gaussian],
            duration: 0.5,
            iterations: 4,
            ..ConvergeConfig::default()
        };
        let rows = converge_study(&cfg, &InferParams::default(), 1).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().enumerate().all(|(j, r)| r.iteration == j));
        assert!(rows[3].correlation > 0.9, "{rows:?}");
        let mut buf = Vec::new();
        write_converge_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("snr,source,iteration,correlation"));
        assert_eq!(text.lines().count(), 5);
    }
}
