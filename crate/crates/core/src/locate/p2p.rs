//! Device self-localization from pairwise chirp directions.

use std::collections::VecDeque;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{DeviceLayout, PairwiseAoas};
use crate::error::{Error, Result};
use crate::num::{wrap_pi, wrap_two_pi};
use crate::scene::{DevicePose, Point};

/// Default reciprocity tolerance for [`filter_reliable`], radians.
pub const DEFAULT_RELIABILITY_TOL: f64 = 10.0 * PI / 180.0;

/// Orientation offsets `psi_j - psi_i` implied by a reciprocal pair.
fn relative_orientation(p: &PairwiseAoas, i: usize, j: usize) -> Option<f64> {
    Some(p.get(i, j)? + PI - p.get(j, i)?)
}

/// Global orientations consistent with the reciprocal pairs, with
/// `anchor` fixed at `anchor_orientation`.
///
/// Starts from a breadth-first spanning tree, then repeatedly replaces each
/// orientation by the circular medoid of its neighbours' predictions, which
/// tolerates a minority of corrupted pairs. Devices without a reciprocal
/// path to the anchor get `NaN`.
pub fn sync_orientations(p: &PairwiseAoas, anchor: usize, anchor_orientation: f64) -> Vec<f64> {
    let n = p.device_count();
    let mut psi = vec![f64::NAN; n];
    if anchor >= n {
        return psi;
    }
    let nbrs: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|j| (0..n).filter(|&i| i != j).filter_map(|i| relative_orientation(p, i, j).map(|r| (i, r))).collect())
        .collect();
    psi[anchor] = anchor_orientation;
    let mut queue = VecDeque::from([anchor]);
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if psi[j].is_nan() {
                if let Some(r) = relative_orientation(p, i, j) {
                    psi[j] = psi[i] + r;
                    queue.push_back(j);
                }
            }
        }
    }
    for _ in 0..10 {
        for j in 0..n {
            if j == anchor || psi[j].is_nan() {
                continue;
            }
            let cands: Vec<f64> = nbrs[j].iter().filter(|(i, _)| !psi[*i].is_nan()).map(|(i, r)| psi[*i] + r).collect();
            let cost = |c: f64| cands.iter().map(|&d| wrap_pi(c - d).abs()).sum::<f64>();
            let medoid = cands.iter().copied().min_by(|a, b| cost(*a).total_cmp(&cost(*b))).unwrap_or(psi[j]);
            // average the agreeing predictions for sub-medoid precision
            let close: Vec<f64> = cands.iter().map(|&c| wrap_pi(c - medoid)).filter(|d| d.abs() < 0.25).collect();
            let shift = close.iter().sum::<f64>() / close.len().max(1) as f64;
            psi[j] = medoid + shift;
        }
    }
    psi.into_iter().map(|a| if a.is_nan() { a } else { wrap_two_pi(a) }).collect()
}

/// Reciprocity residual of the pair `(i, j)` in the global frame, radians in `[0, pi]`.
pub fn reciprocity_residual(p: &PairwiseAoas, orientations: &[f64], i: usize, j: usize) -> Option<f64> {
    let forward = orientations[i] + p.get(i, j)?;
    let back = orientations[j] + p.get(j, i)?;
    let r = wrap_pi(forward + PI - back).abs();
    (!r.is_nan()).then_some(r)
}

/// Drops pairs whose two directions are not roughly opposite in the global
/// frame, using orientations from [`sync_orientations`].
pub fn filter_reliable(p: &PairwiseAoas, tol: f64) -> PairwiseAoas {
    let psi = sync_orientations(p, 0, 0.0);
    filter_reliable_with(p, &psi, tol)
}

/// [`filter_reliable`] with known or previously estimated orientations.
/// Keeps `(i, j)` and `(j, i)` together iff both exist and the residual is within `tol`.
pub fn filter_reliable_with(p: &PairwiseAoas, orientations: &[f64], tol: f64) -> PairwiseAoas {
    let mut out = PairwiseAoas::new(p.device_count());
    for (&(i, j), &theta) in p.iter() {
        if reciprocity_residual(p, orientations, i, j).is_some_and(|r| r <= tol) {
            out.entries.insert((i, j), theta);
        }
    }
    out
}

/// Fixes the frame of the otherwise translation-, rotation- and
/// scale-free angular constraints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gauge {
    pub anchor: usize,
    pub anchor_position: Point,
    pub anchor_orientation: f64,
    /// Device whose distance from the anchor is known.
    pub scale_device: usize,
    pub scale_distance: f64,
}

impl Gauge {
    /// Anchor at the origin facing +x; `scale_device` at unit distance.
    pub fn unit(anchor: usize, scale_device: usize) -> Self {
        Self {
            anchor,
            anchor_position: Point::new(0.0, 0.0),
            anchor_orientation: 0.0,
            scale_device,
            scale_distance: 1.0,
        }
    }

    /// Gauge taken from true poses, as an installer would measure it.
    pub fn from_poses(devices: &[DevicePose], anchor: usize, scale_device: usize) -> Self {
        Self {
            anchor,
            anchor_position: devices[anchor].position,
            anchor_orientation: devices[anchor].orientation,
            scale_device,
            scale_distance: devices[anchor].position.dist(devices[scale_device].position),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Loss {
    /// Sum of squared wrapped residuals.
    #[default]
    Squared,
    /// Sum of absolute wrapped residuals, by iterative reweighting.
    Absolute,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct P2pParams {
    pub starts: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub loss: Loss,
    /// Seed the first start from the closed-form bearing solution.
    pub linear_init: bool,
}

impl Default for P2pParams {
    fn default() -> Self {
        Self { starts: 10, seed: 0, max_iters: 300, loss: Loss::Squared, linear_init: true }
    }
}

/// Parameter packing: each free device owns `x, y, psi`; the scale device
/// owns `alpha, psi` with its position `anchor + D (cos alpha, sin alpha)`.
struct Problem<'a> {
    edges: Vec<(usize, usize, f64)>,
    gauge: &'a Gauge,
    offsets: Vec<Option<usize>>,
    dim: usize,
}

impl<'a> Problem<'a> {
    fn new(p: &PairwiseAoas, gauge: &'a Gauge) -> Self {
        let n = p.device_count();
        let mut offsets = vec![None; n];
        let mut dim = 0;
        for (d, slot) in offsets.iter_mut().enumerate() {
            if d == gauge.anchor {
                continue;
            }
            *slot = Some(dim);
            dim += if d == gauge.scale_device { 2 } else { 3 };
        }
        let edges = p.iter().map(|(&(i, j), &t)| (i, j, t)).collect();
        Self { edges, gauge, offsets, dim }
    }

    fn pose(&self, x: &[f64], d: usize) -> (Point, f64) {
        let g = self.gauge;
        match self.offsets[d] {
            None => (g.anchor_position, g.anchor_orientation),
            Some(o) if d == g.scale_device => (g.anchor_position + Point::from_polar(g.scale_distance, x[o]), x[o + 1]),
            Some(o) => (Point::new(x[o], x[o + 1]), x[o + 2]),
        }
    }

    fn pack(&self, positions: &[Point], orientations: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        for (d, off) in self.offsets.iter().enumerate() {
            let Some(o) = *off else { continue };
            if d == self.gauge.scale_device {
                x[o] = (positions[d] - self.gauge.anchor_position).angle();
                x[o + 1] = orientations[d];
            } else {
                x[o] = positions[d].x;
                x[o + 1] = positions[d].y;
                x[o + 2] = orientations[d];
            }
        }
        x
    }

    fn residuals(&self, x: &[f64]) -> Vec<f64> {
        self.edges
            .iter()
            .map(|&(i, j, t)| {
                let (pi, si) = self.pose(x, i);
                let (pj, _) = self.pose(x, j);
                wrap_pi((pj - pi).angle() - si - t)
            })
            .collect()
    }

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.edges.len(), self.dim);
        for (row, &(i, j, _)) in self.edges.iter().enumerate() {
            let (pi, _) = self.pose(x, i);
            let (pj, _) = self.pose(x, j);
            let d = pj - pi;
            let r2 = d.dot(d).max(1e-18);
            // gradient of atan2(dy, dx) with respect to the end point
            let grad = Point::new(-d.y / r2, d.x / r2);
            for (dev, sign) in [(j, 1.0), (i, -1.0)] {
                let Some(o) = self.offsets[dev] else { continue };
                if dev == self.gauge.scale_device {
                    let a = x[o];
                    let dp = Point::new(-a.sin(), a.cos()) * self.gauge.scale_distance;
                    jac[(row, o)] += sign * grad.dot(dp);
                } else {
                    jac[(row, o)] += sign * grad.x;
                    jac[(row, o + 1)] += sign * grad.y;
                }
            }
            if let Some(o) = self.offsets[i] {
                let psi_col = if i == self.gauge.scale_device { o + 1 } else { o + 2 };
                jac[(row, psi_col)] -= 1.0;
            }
        }
        jac
    }

    fn cost(&self, x: &[f64], loss: Loss) -> f64 {
        let r = self.residuals(x);
        match loss {
            Loss::Squared => r.iter().map(|v| v * v).sum(),
            Loss::Absolute => r.iter().map(|v| v.abs()).sum(),
        }
    }

    /// Levenberg-Marquardt on the (possibly reweighted) squared residuals.
    fn solve(&self, mut x: Vec<f64>, params: &P2pParams) -> Vec<f64> {
        let rounds = if params.loss == Loss::Absolute { 8 } else { 1 };
        for _ in 0..rounds {
            let weights: Vec<f64> = match params.loss {
                Loss::Squared => vec![1.0; self.edges.len()],
                Loss::Absolute => self.residuals(&x).iter().map(|r| 1.0 / r.abs().max(1e-4).sqrt()).collect(),
            };
            let weighted_cost =
                |x: &[f64]| self.residuals(x).iter().zip(&weights).map(|(r, w)| (r * w) * (r * w)).sum::<f64>();
            let mut lambda = 1e-3;
            let mut cost = weighted_cost(&x);
            for _ in 0..params.max_iters {
                let r =
                    DVector::from_iterator(weights.len(), self.residuals(&x).iter().zip(&weights).map(|(r, w)| r * w));
                let mut jac = self.jacobian(&x);
                for (mut row, w) in jac.row_iter_mut().zip(&weights) {
                    row *= *w;
                }
                let jt = jac.transpose();
                let h = &jt * &jac;
                let g = &jt * &r;
                let mut improved = false;
                for _ in 0..20 {
                    let mut damped = h.clone();
                    for k in 0..self.dim {
                        damped[(k, k)] += lambda * (h[(k, k)] + 1e-9);
                    }
                    let Some(chol) = damped.cholesky() else {
                        lambda *= 10.0;
                        continue;
                    };
                    let step = chol.solve(&(-&g));
                    let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                    let c = weighted_cost(&trial);
                    if c < cost {
                        let gain = cost - c;
                        x = trial;
                        cost = c;
                        lambda = (lambda / 3.0).max(1e-12);
                        improved = gain > 1e-16 * (1.0 + cost) && step.norm() > 1e-13;
                        break;
                    }
                    lambda *= 4.0;
                }
                if !improved {
                    break;
                }
            }
        }
        x
    }
}

/// Unit direction of `i -> j` in the global frame implied by `(i, j)` and orientations.
fn bearing(p: &PairwiseAoas, psi: &[f64], i: usize, j: usize) -> Option<f64> {
    let a = p.get(i, j).map(|t| psi[i] + t);
    let b = p.get(j, i).map(|t| psi[j] + t + PI);
    match (a, b) {
        (Some(a), Some(b)) => Some(a + 0.5 * wrap_pi(b - a)),
        (a, b) => a.or(b),
    }
}

/// Positions from bearings alone: the null vector of the collinearity
/// constraints, scaled to the gauge distance.
fn linear_init(p: &PairwiseAoas, psi: &[f64], gauge: &Gauge) -> Option<Vec<Point>> {
    let n = p.device_count();
    let mut rows = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let Some(b) = bearing(p, psi, i, j) else { continue };
            if b.is_nan() {
                continue;
            }
            let u = Point::from_polar(1.0, b);
            // cross(u, L_j - L_i) = 0
            let mut row = vec![0.0; 2 * n];
            row[2 * j] = -u.y;
            row[2 * j + 1] = u.x;
            row[2 * i] = u.y;
            row[2 * i + 1] = -u.x;
            rows.push(row);
        }
    }
    // pin the anchor at the origin
    for k in 0..2 {
        let mut row = vec![0.0; 2 * n];
        row[2 * gauge.anchor + k] = 1e3;
        rows.push(row);
    }
    if rows.len() < 2 * n {
        return None;
    }
    let a = DMatrix::from_row_iterator(rows.len(), 2 * n, rows.into_iter().flatten());
    let svd = a.svd(false, true);
    let vt = svd.v_t?;
    let (k, _) = svd.singular_values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1))?;
    let z = vt.row(k);
    let rel: Vec<Point> = (0..n).map(|d| Point::new(z[2 * d], z[2 * d + 1])).collect();
    let span = rel[gauge.scale_device].dist(rel[gauge.anchor]);
    if span < 1e-12 {
        return None;
    }
    let mut scale = gauge.scale_distance / span;
    // pick the sign that points the rays forwards
    let mut agree = 0.0;
    for (&(i, j), _) in p.iter() {
        if let Some(b) = bearing(p, psi, i, j) {
            agree += (rel[j] - rel[i]).dot(Point::from_polar(1.0, b));
        }
    }
    if agree < 0.0 {
        scale = -scale;
    }
    Some(rel.iter().map(|&q| gauge.anchor_position + (q - rel[gauge.anchor]) * scale).collect())
}

fn connected(p: &PairwiseAoas) -> bool {
    let n = p.device_count();
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for (j, s) in seen.iter_mut().enumerate() {
            if !*s && (p.get(i, j).is_some() || p.get(j, i).is_some()) {
                *s = true;
                stack.push(j);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Jointly estimates device positions and orientations that best explain
/// the pairwise directions, in the frame fixed by `gauge`.
pub fn p2p_localize(p: &PairwiseAoas, gauge: &Gauge, params: &P2pParams) -> Result<DeviceLayout> {
    let n = p.device_count();
    if n < 3 {
        return Err(Error::Underdetermined(format!("{n} devices: angles alone cannot place fewer than 3 devices")));
    }
    if gauge.anchor >= n || gauge.scale_device >= n || gauge.anchor == gauge.scale_device {
        return Err(Error::InvalidInput("gauge must name two distinct devices in range".into()));
    }
    if !(gauge.scale_distance.is_finite() && gauge.scale_distance > 0.0) {
        return Err(Error::InvalidInput("gauge distance must be positive".into()));
    }
    if !connected(p) {
        return Err(Error::Underdetermined("constraint graph is disconnected".into()));
    }
    let problem = Problem::new(p, gauge);
    if problem.edges.len() < problem.dim {
        return Err(Error::Underdetermined(format!(
            "{} constraints for {} unknowns",
            problem.edges.len(),
            problem.dim
        )));
    }

    let mut psi = sync_orientations(p, gauge.anchor, gauge.anchor_orientation);
    for a in psi.iter_mut().filter(|a| a.is_nan()) {
        *a = 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let base = if params.linear_init { linear_init(p, &psi, gauge) } else { None };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for s in 0..params.starts.max(1) {
        let (positions, orient) = match (&base, s) {
            (Some(b), 0) => (b.clone(), psi.clone()),
            _ => {
                let r = 2.0 * gauge.scale_distance;
                let pos = (0..n)
                    .map(|_| gauge.anchor_position + Point::new(rng.random_range(-r..r), rng.random_range(-r..r)))
                    .collect();
                let o = psi.iter().map(|a| a + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect();
                (pos, o)
            }
        };
        let x = problem.solve(problem.pack(&positions, &orient), params);
        let c = problem.cost(&x, params.loss);
        if best.as_ref().is_none_or(|(bc, _)| c < *bc) {
            best = Some((c, x));
        }
    }
    let (_, x) = best.expect("at least one start");

    let jac = problem.jacobian(&x);
    let sv = jac.svd(false, false).singular_values;
    let (lo, hi) = sv.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if sv.len() < problem.dim || lo <= 1e-9 * hi {
        return Err(Error::Underdetermined("constraints leave the layout unresolved (e.g. collinear devices)".into()));
    }

    let r = problem.residuals(&x);
    let rms = (r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt();
    let devices = (0..n)
        .map(|d| {
            let (pos, o) = problem.pose(&x, d);
            DevicePose::new(pos, wrap_two_pi(o))
        })
        .collect();
    Ok(DeviceLayout {
        devices,
        gauge: format!(
            "device {} at ({}, {}) heading {} rad; device {} at {} m",
            gauge.anchor,
            gauge.anchor_position.x,
            gauge.anchor_position.y,
            gauge.anchor_orientation,
            gauge.scale_device,
            gauge.scale_distance
        ),
        residual_rms: rms,
    })
}

/// Best rotation + translation + uniform scale of `estimated` onto `truth`
/// (no reflection). Returns the aligned points and the RMS error.
pub fn align_similarity(estimated: &[Point], truth: &[Point]) -> (Vec<Point>, f64) {
    assert_eq!(estimated.len(), truth.len(), "align_similarity: length mismatch");
    let n = estimated.len().max(1) as f64;
    let mean = |v: &[Point]| v.iter().fold(Point::new(0.0, 0.0), |a, &b| a + b) * (1.0 / n);
    let (me, mt) = (mean(estimated), mean(truth));
    // complex least squares: a * e + b ~ t
    let (mut re, mut im, mut norm) = (0.0, 0.0, 0.0);
    for (&e, &t) in estimated.iter().zip(truth) {
        let (e, t) = (e - me, t - mt);
        re += e.x * t.x + e.y * t.y;
        im += e.x * t.y - e.y * t.x;
        norm += e.dot(e);
    }
    let (ar, ai) = if norm > 0.0 { (re / norm, im / norm) } else { (1.0, 0.0) };
    let aligned: Vec<Point> = estimated
        .iter()
        .map(|&e| {
            let e = e - me;
            mt + Point::new(ar * e.x - ai * e.y, ai * e.x + ar * e.y)
        })
        .collect();
    let rms = (aligned.iter().zip(truth).map(|(a, t)| a.dist(*t).powi(2)).sum::<f64>() / n).sqrt();
    (aligned, rms)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(n: usize, seed: u64) -> Vec<DevicePose> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / n as f64 + rng.random_range(-0.2..0.2);
                DevicePose::new(
                    Point::new(2.5, 2.5) + Point::from_polar(rng.random_range(1.5..2.4), a),
                    rng.random_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect()
    }

    #[test]
    fn reciprocal_pairs_all_kept() {
        let devs = ring(5, 1);
        let p = PairwiseAoas::from_poses(&devs);
        assert_eq!(filter_reliable(&p, 1e-6).len(), p.len());
        let psi = sync_orientations(&p, 0, devs[0].orientation);
        for (a, d) in psi.iter().zip(&devs) {
            assert!(wrap_pi(a - d.orientation).abs() < 1e-9);
        }
    }

    #[test]
    fn corrupted_pair_removed() {
        let devs = ring(4, 2);
        let mut p = PairwiseAoas::from_poses(&devs);
        let bad = wrap_two_pi(p.get(1, 3).unwrap() + PI / 2.0);
        p.insert(1, 3, bad).unwrap();
        let kept = filter_reliable(&p, DEFAULT_RELIABILITY_TOL);
        assert_eq!(kept.len(), p.len() - 2);
        assert!(kept.get(1, 3).is_none() && kept.get(3, 1).is_none());
    }

    #[test]
    fn vacuous_tolerance_keeps_everything() {
        let devs = ring(4, 3);
        let mut p = PairwiseAoas::from_poses(&devs);
        p.insert(0, 2, 1.234).unwrap();
        assert_eq!(filter_reliable(&p, PI).len(), p.len());
    }

    #[test]
    fn one_way_pairs_dropped() {
        let devs = ring(3, 4);
        let mut p = PairwiseAoas::from_poses(&devs);
        p.entries.remove(&(0, 1));
        let kept = filter_reliable(&p, DEFAULT_RELIABILITY_TOL);
        assert!(kept.get(1, 0).is_none());
        assert_eq!(kept.len(), 4);
    }

    #[test]
    fn noiseless_layout_exact() {
        for n in 4..=8 {
            let devs = ring(n, 10 + n as u64);
            let p = PairwiseAoas::from_poses(&devs);
            let layout = p2p_localize(&p, &Gauge::from_poses(&devs, 0, 1), &P2pParams::default()).unwrap();
            let truth: Vec<Point> = devs.iter().map(|d| d.position).collect();
            let (_, rms) = align_similarity(&layout.positions(), &truth);
            assert!(rms < 1e-6, "n={n} rms={rms}");
            for (a, d) in layout.devices.iter().zip(&devs) {
                assert!(a.position.dist(d.position) < 1e-6);
                assert!(wrap_pi(a.orientation - d.orientation).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn absolute_loss_also_exact() {
        let devs = ring(5, 30);
        let p = PairwiseAoas::from_poses(&devs);
        let params = P2pParams { loss: Loss::Absolute, ..P2pParams::default() };
        let layout = p2p_localize(&p, &Gauge::from_poses(&devs, 0, 2), &params).unwrap();
        let truth: Vec<Point> = devs.iter().map(|d| d.position).collect();
        assert!(align_similarity(&layout.positions(), &truth).1 < 1e-4);
    }

    #[test]
    fn two_devices_underdetermined() {
        let devs = ring(2, 5);
        let p = PairwiseAoas::from_poses(&devs);
        assert!(matches!(p2p_localize(&p, &Gauge::unit(0, 1), &P2pParams::default()), Err(Error::Underdetermined(_))));
    }

    #[test]
    fn collinear_devices_underdetermined() {
        let devs: Vec<DevicePose> = (0..4)
            .map(|k| DevicePose::new(Point::new(k as f64 * (1.0 + 0.3 * k as f64), 0.0), 0.4 * k as f64))
            .collect();
        let p = PairwiseAoas::from_poses(&devs);
        assert!(matches!(
            p2p_localize(&p, &Gauge::from_poses(&devs, 0, 1), &P2pParams::default()),
            Err(Error::Underdetermined(_))
        ));
    }

    #[test]
    fn restarts_agree() {
        let devs = ring(6, 6);
        let mut p = PairwiseAoas::from_poses(&devs);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let keys: Vec<(usize, usize)> = p.entries.keys().copied().collect();
        for k in keys {
            let v = p.entries[&k] + 2f64.to_radians() * rng.sample::<f64, _>(StandardNormal);
            p.insert(k.0, k.1, wrap_two_pi(v)).unwrap();
        }
        let gauge = Gauge::from_poses(&devs, 0, 1);
        let reference = p2p_localize(&p, &gauge, &P2pParams::default()).unwrap().positions();
        for seed in 1..10 {
            let params = P2pParams { seed, linear_init: false, ..P2pParams::default() };
            let other = p2p_localize(&p, &gauge, &params).unwrap().positions();
            let (_, rms) = align_similarity(&other, &reference);
            assert!(rms < 1e-3, "seed {seed}: {rms}");
        }
    }

    #[test]
    fn similarity_alignment_undoes_transform() {
        let pts = [Point::new(0.0, 0.0), Point::new(1.0, 0.2), Point::new(-0.3, 2.0)];
        let moved: Vec<Point> = pts.iter().map(|p| p.rotated(0.7) * 2.5 + Point::new(3.0, -1.0)).collect();
        let (aligned, rms) = align_similarity(&moved, &pts);
        assert!(rms < 1e-12);
        assert!(aligned[2].dist(pts[2]) < 1e-12);
    }
}
