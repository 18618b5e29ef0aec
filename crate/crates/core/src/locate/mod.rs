//! Device self-localization from pairwise chirps and user triangulation
//! from per-device voice directions.

mod dbscan;
mod p2p;

pub use dbscan::dbscan;
pub use p2p::{
    align_similarity, filter_reliable, filter_reliable_with, p2p_localize, reciprocity_residual, sync_orientations,
    Gauge, Loss, P2pParams, DEFAULT_RELIABILITY_TOL,
};

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::aoa::{estimate_aoa_from_channels, AoaEstimate};
use crate::dsp::{deconvolve_window, DEFAULT_REG};
use crate::error::{Error, Result};
use crate::num::wrap_two_pi;
use crate::scene::{DevicePose, Point, Scene, SPEED_OF_SOUND};
use crate::simulate::record_chirp;
use crate::Signal;

/// DBSCAN neighbourhood radius for ray intersections, meters.
pub const CLUSTER_EPS: f64 = 0.5;
pub const CLUSTER_MIN_PTS: usize = 2;

/// `theta_i^j`: direction of device `j`'s chirp as heard by device `i`, in
/// device `i`'s frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairwiseAoas {
    device_count: usize,
    pub(crate) entries: BTreeMap<(usize, usize), f64>,
}

impl PairwiseAoas {
    pub fn new(device_count: usize) -> Self {
        Self { device_count, entries: BTreeMap::new() }
    }

    /// Exact directions implied by known poses.
    pub fn from_poses(devices: &[DevicePose]) -> Self {
        let mut p = Self::new(devices.len());
        for (i, a) in devices.iter().enumerate() {
            for (j, b) in devices.iter().enumerate() {
                if i != j {
                    p.entries.insert((i, j), wrap_two_pi((b.position - a.position).angle() - a.orientation));
                }
            }
        }
        p
    }

    pub fn insert(&mut self, i: usize, j: usize, theta: f64) -> Result<()> {
        if i == j || i >= self.device_count || j >= self.device_count {
            return Err(Error::InvalidInput(format!("bad device pair ({i}, {j}) for {} devices", self.device_count)));
        }
        if !theta.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite angle for pair ({i}, {j})")));
        }
        self.entries.insert((i, j), wrap_two_pi(theta));
        Ok(())
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.entries.get(&(i, j)).copied()
    }

    pub fn device_count(&self) -> usize {
        self.device_count
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(usize, usize), &f64)> {
        self.entries.iter()
    }

    /// Copy with independent Gaussian noise of `sigma` radians on every entry.
    pub fn perturbed(&self, sigma: f64, rng: &mut impl rand::Rng) -> Result<Self> {
        let noise = rand_distr::Normal::new(0.0, sigma).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let mut out = self.clone();
        for v in out.entries.values_mut() {
            *v = wrap_two_pi(*v + rand_distr::Distribution::sample(&noise, rng));
        }
        Ok(out)
    }
}

/// Device poses in a shared frame; serializes with the same `[[devices]]`
/// tables as a scene file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceLayout {
    pub devices: Vec<DevicePose>,
    /// How the frame was fixed.
    #[serde(default)]
    pub gauge: String,
    /// RMS angular residual of the fit that produced the layout, radians.
    #[serde(default)]
    pub residual_rms: f64,
}

impl DeviceLayout {
    pub fn from_devices(devices: Vec<DevicePose>) -> Self {
        Self { devices, gauge: "known poses".into(), residual_rms: 0.0 }
    }

    pub fn from_scene(scene: &Scene) -> Self {
        Self::from_devices(scene.devices.clone())
    }

    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }

    pub fn positions(&self) -> Vec<Point> {
        self.devices.iter().map(|d| d.position).collect()
    }

    pub fn orientations(&self) -> Vec<f64> {
        self.devices.iter().map(|d| d.orientation).collect()
    }

    /// Copies microphone count and radius from `arrays`, device by device.
    pub fn with_arrays(mut self, arrays: &[DevicePose]) -> Self {
        for (d, a) in self.devices.iter_mut().zip(arrays) {
            d.mic_count = a.mic_count;
            d.array_radius = a.array_radius;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.devices.is_empty() {
            return Err(Error::scene("devices", "layout needs at least one device"));
        }
        for (i, d) in self.devices.iter().enumerate() {
            d.validate(&format!("devices[{i}]"))?;
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let layout: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        layout.validate()?;
        Ok(layout)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Reads a layout file, or the `devices` of a scene file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())?;
        match Self::from_toml_str(&text) {
            Ok(l) => Ok(l),
            Err(layout_err) => Scene::from_toml_str(&text).map(|s| Self::from_scene(&s)).map_err(|_| layout_err),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserLocation {
    pub position: Point,
    /// Intersections in the winning cluster; 0 when no cluster formed.
    pub cluster_size: usize,
    pub intersection_points: Vec<Point>,
}

/// Where two rays `p + t u` meet with both parameters positive.
pub fn ray_intersection(p: Point, u: Point, q: Point, v: Point) -> Option<Point> {
    let den = u.cross(v);
    if den.abs() < 1e-12 {
        return None;
    }
    let w = q - p;
    let t = w.cross(v) / den;
    let s = w.cross(u) / den;
    (t > 0.0 && s > 0.0).then(|| p + u * t)
}

/// Locates the user from per-device estimates.
pub fn triangulate(layout: &DeviceLayout, aoas: &[AoaEstimate]) -> Result<UserLocation> {
    let angles: Vec<f64> = aoas.iter().map(|a| a.angle).collect();
    triangulate_angles(layout, &angles)
}

/// Locates the user from device-frame directions: intersects every pair of
/// global rays, clusters the intersections and returns the centroid of the
/// largest cluster.
pub fn triangulate_angles(layout: &DeviceLayout, angles: &[f64]) -> Result<UserLocation> {
    triangulate_clustered(layout, angles, CLUSTER_EPS, CLUSTER_MIN_PTS)
}

/// [`triangulate_angles`] with an explicit DBSCAN radius (meters) and minimum cluster size.
pub fn triangulate_clustered(layout: &DeviceLayout, angles: &[f64], eps: f64, min_pts: usize) -> Result<UserLocation> {
    if !(eps.is_finite() && eps > 0.0) || min_pts == 0 {
        return Err(Error::InvalidInput("cluster radius must be positive and min_pts at least 1".into()));
    }
    if angles.len() != layout.len() {
        return Err(Error::LengthMismatch(format!("{} angles for {} devices", angles.len(), layout.len())));
    }
    if angles.len() < 2 {
        return Err(Error::InvalidInput("triangulation needs at least 2 devices".into()));
    }
    let rays: Vec<(Point, Point)> = layout
        .devices
        .iter()
        .zip(angles)
        .map(|(d, &a)| (d.position, Point::from_polar(1.0, d.orientation + a)))
        .collect();
    let mut points = Vec::new();
    for i in 0..rays.len() {
        for j in (i + 1)..rays.len() {
            if let Some(x) = ray_intersection(rays[i].0, rays[i].1, rays[j].0, rays[j].1) {
                points.push(x);
            }
        }
    }
    if points.is_empty() {
        return Err(Error::NoIntersection("no two rays meet in front of their devices".into()));
    }
    let coords: Vec<[f64; 2]> = points.iter().map(|p| [p.x, p.y]).collect();
    let labels = dbscan(&coords, eps, min_pts);
    let clusters = labels.iter().flatten().max().map_or(0, |m| m + 1);
    let centroid =
        |members: &[Point]| members.iter().fold(Point::new(0.0, 0.0), |a, &b| a + b) * (1.0 / members.len() as f64);
    let mut best: Option<(usize, f64, Point)> = None;
    for c in 0..clusters {
        let members: Vec<Point> = points.iter().zip(&labels).filter(|(_, l)| **l == Some(c)).map(|(p, _)| *p).collect();
        let centre = centroid(&members);
        let spread = members.iter().map(|p| p.dist(centre)).sum::<f64>() / members.len() as f64;
        // larger, then tighter, then lexicographically smaller: independent of device order
        let better = match best {
            None => true,
            Some((n, s, b)) => {
                members.len() > n
                    || (members.len() == n && (spread < s || (spread == s && (centre.x, centre.y) < (b.x, b.y))))
            }
        };
        if better {
            best = Some((members.len(), spread, centre));
        }
    }
    let (position, cluster_size) = match best {
        Some((n, _, c)) => (c, n),
        None => (centroid(&points), 0),
    };
    Ok(UserLocation { position, cluster_size, intersection_points: points })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChirpParams {
    /// Seconds.
    pub duration: f64,
    pub reg: f64,
}

impl Default for ChirpParams {
    fn default() -> Self {
        Self { duration: 0.5, reg: DEFAULT_REG }
    }
}

/// Measures every `theta_i^j` acoustically: each device plays a known chirp
/// in turn, the others deconvolve per-mic channels and estimate the
/// direction from them.
pub fn measure_pairwise_aoas(scene: &Scene, params: &ChirpParams) -> Result<PairwiseAoas> {
    let n = scene.device_count();
    let fs = scene.sample_rate as f64;
    let mut out = PairwiseAoas::new(n);
    let span = scene.room.width.hypot(scene.room.depth);
    let len = ((span / SPEED_OF_SOUND + 0.02) * fs).ceil() as usize + scene.pre_roll_samples();
    for e in 0..n {
        let (recordings, chirp) = record_chirp(scene, e, params.duration)?;
        let mut padded = vec![0.0; scene.pre_roll_samples()];
        padded.extend_from_slice(chirp.samples());
        let reference = Signal::new(padded, scene.sample_rate)?;
        for (i, mics) in recordings.iter().enumerate() {
            if i == e {
                continue;
            }
            let channels = mics
                .iter()
                .map(|x| deconvolve_window(x, &reference, 0, len, params.reg))
                .collect::<Result<Vec<_>>>()?;
            let est = estimate_aoa_from_channels(&channels, &scene.devices[i])?;
            out.insert(i, e, est.angle)?;
        }
    }
    Ok(out)
}
