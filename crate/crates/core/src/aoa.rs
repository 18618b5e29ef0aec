//! GCC-PHAT direction-of-arrival estimation on uniform circular arrays.
//!
//! Each diagonally opposite microphone pair yields a whitened
//! cross-correlation curve. Candidate angles on a 1 degree grid are projected
//! to the lag they would produce on each pair, the curves are sampled there,
//! averaged across pairs, and the best angle wins.

use std::f64::consts::{FRAC_PI_2, TAU};

use rustfft::num_complex::Complex;

use crate::dsp::{self, next_fft_len, Correlation, Spectrum};
use crate::error::{Error, Result};
use crate::num::Real;
use crate::scene::{DevicePose, Point, SPEED_OF_SOUND};
use crate::{ImpulseResponse, Signal};

/// Number of candidate angles (1 degree apart).
pub const ANGLE_BINS: usize = 360;

/// Generalized cross-correlation with phase transform.
///
/// `values[l]` is the inverse transform of `A conj(B) / |A conj(B)|` at lag
/// `l`, so the peak sits at `l` when `a(t) = b(t - l)`. Bins whose cross
/// magnitude falls below `1e-12` of the largest are dropped. A pair of
/// identical signals peaks at exactly 1.
pub fn gcc_phat<T: Real>(a: &dsp::Signal<T>, b: &dsp::Signal<T>, max_lag: usize) -> Result<Correlation<T>> {
    if a.sample_rate() != b.sample_rate() {
        return Err(Error::SampleRateMismatch { left: a.sample_rate(), right: b.sample_rate() });
    }
    if a.energy() == T::zero() || b.energy() == T::zero() {
        return Err(Error::Degenerate("gcc_phat input has zero energy".into()));
    }
    let n = next_fft_len(a.len().max(b.len()) + max_lag + 1);
    let cross = Spectrum::of(a.samples(), n).cross(&Spectrum::of(b.samples(), n));
    let floor = cross.peak_power().sqrt() * T::lit(1e-12);
    let zero = Complex::new(T::zero(), T::zero());
    let whitened: Vec<Complex<T>> = cross
        .bins()
        .iter()
        .map(|c| {
            let m = c.norm();
            if m > floor {
                c / m
            } else {
                zero
            }
        })
        .collect();
    let circ = Spectrum::from_bins(whitened).inverse();
    let kept = T::from_usize(cross.bins().iter().filter(|c| c.norm() > floor).count()).unwrap();
    // renormalize so a perfectly coherent pair peaks at 1 even when bins were dropped
    let scale = T::from_usize(n).unwrap() / kept;
    let mut corr = dsp::two_sided(&circ, max_lag.min(n / 2 - 1));
    for v in &mut corr.values {
        *v *= scale;
    }
    Ok(corr)
}

/// How a GCC curve is read between integer lags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LagInterpolation {
    /// Windowed-sinc (band-limited) interpolation.
    #[default]
    Sinc,
    /// Parabola through the three nearest integer lags.
    Parabolic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoaParams {
    pub interpolation: LagInterpolation,
    /// Keep the per-pair angle curves in the estimate.
    pub keep_curves: bool,
}

impl Default for AoaParams {
    fn default() -> Self {
        Self { interpolation: LagInterpolation::Sinc, keep_curves: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AoaEstimate {
    /// Device-frame angle, radians in `[0, 2pi)`, a whole number of degrees.
    pub angle: f64,
    /// Averaged GCC value at the chosen angle; 0 when degenerate.
    pub confidence: f64,
    /// Set when every pair peaked at zero lag (e.g. identical channels);
    /// `angle` is then the broadside convention of 90 degrees.
    pub degenerate: bool,
    /// `M/2` curves of `ANGLE_BINS` values, when requested.
    pub per_pair_curves: Option<Vec<Vec<f64>>>,
}

impl AoaEstimate {
    pub fn degrees(&self) -> f64 {
        self.angle.to_degrees()
    }
}

/// Lag (samples) that a plane wave from device-frame `angle` produces on
/// the pair `(a, b)`, in the [`gcc_phat`] convention.
pub fn expected_lag(a: Point, b: Point, angle: f64, sample_rate: u32) -> f64 {
    (b - a).dot(Point::from_polar(1.0, angle)) / SPEED_OF_SOUND * sample_rate as f64
}

/// Diagonally opposite pairs `(p, p + M/2)`.
pub fn diagonal_pairs(mic_count: usize) -> Result<Vec<(usize, usize)>> {
    if mic_count < 4 || !mic_count.is_multiple_of(2) {
        return Err(Error::UnsupportedLayout(format!(
            "need an even number of at least 4 microphones, got {mic_count}"
        )));
    }
    let half = mic_count / 2;
    Ok((0..half).map(|p| (p, p + half)).collect())
}

pub fn estimate_aoa(mics: &[Signal], device: &DevicePose) -> Result<AoaEstimate> {
    estimate_aoa_with(mics, device, &AoaParams::default())
}

/// Same pipeline as [`estimate_aoa`] on per-mic impulse responses.
pub fn estimate_aoa_from_channels(channels: &[ImpulseResponse], device: &DevicePose) -> Result<AoaEstimate> {
    let mics: Vec<Signal> = channels.iter().map(ImpulseResponse::to_signal).collect();
    estimate_aoa_with(&mics, device, &AoaParams::default())
}

pub fn estimate_aoa_with(mics: &[Signal], device: &DevicePose, params: &AoaParams) -> Result<AoaEstimate> {
    if mics.len() != device.mic_count {
        return Err(Error::LengthMismatch(format!("{} signals for {} microphones", mics.len(), device.mic_count)));
    }
    let pairs = diagonal_pairs(mics.len())?;
    let fs = mics[0].sample_rate();
    let offsets = device.local_mic_offsets();
    let aperture = 2.0 * device.array_radius / SPEED_OF_SOUND * fs as f64;
    let shortest = mics.iter().map(Signal::len).min().unwrap_or(0);
    let max_lag = (aperture.ceil() as usize + dsp::KERNEL_HALF_WIDTH + 2).min(shortest.saturating_sub(1));

    let mut curves = Vec::with_capacity(pairs.len());
    let mut all_zero_peak = true;
    for &(a, b) in &pairs {
        let g = gcc_phat(&mics[a], &mics[b], max_lag)?;
        all_zero_peak &= g.argmax_lag() == 0;
        let curve: Vec<f64> = (0..ANGLE_BINS)
            .map(|deg| {
                let lag = expected_lag(offsets[a], offsets[b], (deg as f64).to_radians(), fs);
                sample_curve(&g, lag, params.interpolation)
            })
            .collect();
        curves.push(curve);
    }

    // a resolvable array cannot put every diagonal at zero lag
    if all_zero_peak && aperture * (std::f64::consts::PI / pairs.len() as f64).cos() >= 1.0 {
        return Ok(AoaEstimate {
            angle: FRAC_PI_2,
            confidence: 0.0,
            degenerate: true,
            per_pair_curves: params.keep_curves.then_some(curves),
        });
    }

    let k = pairs.len() as f64;
    let mean: Vec<f64> = (0..ANGLE_BINS).map(|d| curves.iter().map(|c| c[d]).sum::<f64>() / k).collect();
    let (best, _) =
        mean.iter().enumerate().fold(
            (0usize, f64::NEG_INFINITY),
            |(bi, bv), (i, &v)| {
                if v.abs() > bv {
                    (i, v.abs())
                } else {
                    (bi, bv)
                }
            },
        );
    Ok(AoaEstimate {
        angle: (best as f64).to_radians() % TAU,
        confidence: mean[best],
        degenerate: false,
        per_pair_curves: params.keep_curves.then_some(curves),
    })
}

fn sample_curve(g: &Correlation<f64>, lag: f64, how: LagInterpolation) -> f64 {
    let pos = lag + g.max_lag() as f64;
    match how {
        LagInterpolation::Sinc => dsp::interpolate_at(&g.values, pos),
        LagInterpolation::Parabolic => {
            let last = g.values.len() as i64 - 1;
            let c = (pos.round() as i64).clamp(1, last - 1);
            let t = pos - c as f64;
            let (y0, y1, y2) = (g.values[c as usize - 1], g.values[c as usize], g.values[c as usize + 1]);
            y1 + 0.5 * t * (y2 - y0) + 0.5 * t * t * (y2 - 2.0 * y1 + y0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{convolve, fractional_shift};
    use crate::scene::SourceKind;
    use crate::simulate::make_source;

    fn noise(n: usize, seed: u64) -> Signal {
        make_source(SourceKind::Gaussian, n as f64 / 16000.0, 16000, seed).unwrap()
    }

    fn delayed(s: &Signal, d: f64) -> Signal {
        Signal::new(fractional_shift(s.samples(), d), s.sample_rate()).unwrap()
    }

    /// Plane wave from device-frame `angle`: each mic hears the source
    /// advanced by its projection onto the arrival direction.
    fn plane_wave(device: &DevicePose, angle: f64, seed: u64) -> Vec<Signal> {
        let s = noise(4000, seed);
        let u = Point::from_polar(1.0, angle);
        device.local_mic_offsets().iter().map(|o| delayed(&s, 40.0 - o.dot(u) / SPEED_OF_SOUND * 16000.0)).collect()
    }

    fn circ_deg(a: f64, b: f64) -> f64 {
        crate::num::wrap_pi(a - b).abs().to_degrees()
    }

    #[test]
    fn gcc_peak_at_shift() {
        let b = noise(2000, 1);
        let a = delayed(&b, 3.0);
        let g = gcc_phat(&a, &b, 10).unwrap();
        assert_eq!(g.argmax_lag(), 3);
        assert!((g.at(3) - 1.0).abs() < 0.05, "{}", g.at(3));
    }

    #[test]
    fn identical_signals_peak_at_one() {
        let a = noise(1000, 2);
        let g = gcc_phat(&a, &a, 5).unwrap();
        assert_eq!(g.argmax_lag(), 0);
        assert!((g.at(0) - 1.0).abs() < 1e-9);
        assert!(g.values.iter().all(|v| v.abs() <= 1.0 + 1e-9));
    }

    #[test]
    fn magnitude_shaping_does_not_move_peak() {
        let s = noise(3000, 3);
        let h1 = ImpulseResponse::new(vec![0.0, 0.2, 1.0, 0.2, 0.0], 16000).unwrap();
        let h2 = ImpulseResponse::new(vec![-0.3, 0.5, 1.0, 0.5, -0.3], 16000).unwrap();
        let a = delayed(&convolve(&s, &h1).unwrap(), 4.0);
        let b = convolve(&s, &h2).unwrap();
        assert_eq!(gcc_phat(&a, &b, 10).unwrap().argmax_lag(), 4);
    }

    #[test]
    fn uncorrelated_pairs_are_weak() {
        let mut worst: f64 = 0.0;
        for t in 0..50 {
            let a = noise(4000, 100 + t);
            let b = noise(4000, 200 + t);
            let coherent = gcc_phat(&a, &delayed(&a, 2.0), 20).unwrap();
            let chance = gcc_phat(&a, &b, 20).unwrap();
            let peak = |c: &Correlation<f64>| c.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            worst = worst.max(peak(&chance) / peak(&coherent));
        }
        assert!(worst < 0.2, "{worst}");
    }

    #[test]
    fn zero_energy_rejected() {
        let a = noise(100, 4);
        let z = Signal::zeros(100, 16000);
        assert!(matches!(gcc_phat(&a, &z, 5), Err(Error::Degenerate(_))));
    }

    #[test]
    fn odd_arrays_unsupported() {
        let d = DevicePose::new(Point::new(0.0, 0.0), 0.0).with_array(5, 0.05);
        let mics = vec![noise(500, 5); 5];
        assert!(matches!(estimate_aoa(&mics, &d), Err(Error::UnsupportedLayout(_))));
    }

    #[test]
    fn plane_wave_recovered_on_grid() {
        let d = DevicePose::new(Point::new(1.0, 1.0), 0.3);
        for (i, deg) in [0.0, 17.0, 90.0, 163.0, 241.0, 300.0].iter().enumerate() {
            let est = estimate_aoa(&plane_wave(&d, f64::to_radians(*deg), i as u64), &d).unwrap();
            assert!(circ_deg(est.angle, deg.to_radians()) <= 2.0, "{deg} -> {}", est.degrees());
            assert_eq!(est.degrees().round(), (est.degrees() * 1e6).round() / 1e6);
            assert!(!est.degenerate);
        }
    }

    #[test]
    fn parabolic_mode_also_tracks() {
        let d = DevicePose::new(Point::new(0.0, 0.0), 0.0);
        let params = AoaParams { interpolation: LagInterpolation::Parabolic, keep_curves: true };
        let est = estimate_aoa_with(&plane_wave(&d, 1.0, 9), &d, &params).unwrap();
        assert!(circ_deg(est.angle, 1.0) <= 3.0, "{}", est.degrees());
        let curves = est.per_pair_curves.unwrap();
        assert_eq!((curves.len(), curves[0].len()), (3, ANGLE_BINS));
    }

    #[test]
    fn scaling_leaves_angle_unchanged() {
        let d = DevicePose::new(Point::new(0.0, 0.0), 0.0);
        let mics = plane_wave(&d, 2.2, 11);
        let scaled: Vec<Signal> = mics.iter().map(|s| s.scaled(37.5)).collect();
        assert_eq!(estimate_aoa(&mics, &d).unwrap().angle, estimate_aoa(&scaled, &d).unwrap().angle);
    }

    #[test]
    fn single_tap_channels_exact() {
        let d = DevicePose::new(Point::new(0.0, 0.0), 0.0);
        let angle = 130f64.to_radians();
        let u = Point::from_polar(1.0, angle);
        let taps: Vec<ImpulseResponse> = d
            .local_mic_offsets()
            .iter()
            .map(|o| {
                let delay = 60.0 - o.dot(u) / SPEED_OF_SOUND * 16000.0;
                crate::simulate::place_taps(&[(delay, 1.0)], 16000)
            })
            .collect();
        let est = estimate_aoa_from_channels(&taps, &d).unwrap();
        assert!(circ_deg(est.angle, angle) <= 1.0, "{}", est.degrees());
    }

    #[test]
    fn identical_channels_are_degenerate() {
        let d = DevicePose::new(Point::new(0.0, 0.0), 0.0);
        let h = crate::simulate::place_taps(&[(20.0, 1.0), (33.0, 0.4)], 16000);
        let est = estimate_aoa_from_channels(&vec![h; 6], &d).unwrap();
        assert!(est.degenerate);
        assert_eq!(est.angle, FRAC_PI_2);
        assert_eq!(est.confidence, 0.0);
    }

    #[test]
    fn los_dominates_weaker_echo() {
        let d = DevicePose::new(Point::new(0.0, 0.0), 0.0);
        let los = plane_wave(&d, 90f64.to_radians(), 21);
        let echo = plane_wave(&d, 220f64.to_radians(), 21);
        let g = 10f64.powf(-10.0 / 20.0);
        let mics: Vec<Signal> = los
            .iter()
            .zip(&echo)
            .map(|(l, e)| {
                let late = fractional_shift(e.samples(), 45.0);
                Signal::new(l.samples().iter().zip(&late).map(|(a, b)| a + g * b).collect(), 16000).unwrap()
            })
            .collect();
        let est = estimate_aoa(&mics, &d).unwrap();
        assert!(circ_deg(est.angle, 90f64.to_radians()) <= 5.0, "{}", est.degrees());
    }
}
