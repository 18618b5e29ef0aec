use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scene::SourceKind;
use crate::Signal;

/// Chirp sweep band, Hz.
pub const CHIRP_BAND: (f64, f64) = (1000.0, 7000.0);

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Synthesizes a source waveform; deterministic for a given seed.
///
/// * `Gaussian` - unit-variance white noise.
/// * `SpeechLike` - voiced harmonic series with a drifting 100-250 Hz pitch,
///   a slow onset, syllable-rate modulation and short unvoiced noise bursts.
/// * `Chirp` - linear sweep across [`CHIRP_BAND`].
pub fn make_source(kind: SourceKind, duration: f64, sample_rate: u32, seed: u64) -> Result<Signal> {
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::InvalidInput("source duration must be positive".into()));
    }
    if sample_rate == 0 {
        return Err(Error::InvalidInput("sample rate must be positive".into()));
    }
    let n = (duration * sample_rate as f64).round().max(1.0) as usize;
    let fs = sample_rate as f64;
    let mut rng = stream_rng(seed, 0);
    let samples = match kind {
        SourceKind::Gaussian => (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        SourceKind::Chirp => chirp(n, fs, CHIRP_BAND.0, CHIRP_BAND.1.min(0.45 * fs)),
        SourceKind::SpeechLike => speech_like(n, fs, &mut rng),
    };
    Signal::new(samples, sample_rate)
}

fn chirp(n: usize, fs: f64, f0: f64, f1: f64) -> Vec<f64> {
    let total = n as f64 / fs;
    let fade = (0.005 * fs) as usize;
    (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            let phase = TAU * (f0 * t + 0.5 * (f1 - f0) * t * t / total);
            let edge = i.min(n - 1 - i);
            let w = if edge < fade { 0.5 - 0.5 * (PI * edge as f64 / fade as f64).cos() } else { 1.0 };
            w * phase.sin()
        })
        .collect()
}

fn speech_like(n: usize, fs: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let base = rng.random_range(120.0..180.0);
    let drift_rate = rng.random_range(0.4..1.2);
    let drift_phase = rng.random_range(0.0..TAU);
    let syllable_rate = rng.random_range(3.0..5.0);
    let syllable_phase = rng.random_range(0.0..TAU);
    let formants = [rng.random_range(450.0..800.0), rng.random_range(1100.0..1900.0), rng.random_range(2300.0..3000.0)];
    let onset = 0.2;
    let nyquist = 0.5 * fs;

    let mut phases = vec![0.0f64; 64];
    let mut jitter = 0.0f64;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / fs;
        jitter = 0.999 * jitter + 0.02 * rng.sample::<f64, _>(StandardNormal);
        let f0 = (base + 45.0 * (TAU * drift_rate * t + drift_phase).sin() + jitter).clamp(100.0, 250.0);
        let mut voiced = 0.0;
        for (k, ph) in phases.iter_mut().enumerate() {
            let f = f0 * (k + 1) as f64;
            if f > 0.5 * nyquist {
                break;
            }
            *ph = (*ph + TAU * f / fs) % TAU;
            let shape: f64 = formants.iter().map(|&fm| (-((f - fm) / 180.0).powi(2)).exp()).sum::<f64>() + 0.08;
            voiced += shape / ((k + 1) as f64).sqrt() * ph.sin();
        }
        let ramp = if t < onset { (0.5 * PI * t / onset).sin().powi(2) } else { 1.0 };
        let syllable = 0.55 + 0.45 * (PI * syllable_rate * t + syllable_phase).sin().powi(2);
        out.push(ramp * syllable * voiced);
    }

    // unvoiced bursts after the onset
    let rms = (out.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt().max(1e-12);
    let bursts = rng.random_range(2..=4);
    let start_min = (onset * fs) as usize;
    for _ in 0..bursts {
        let len = (rng.random_range(0.04..0.08) * fs) as usize;
        if start_min + len >= n {
            break;
        }
        let start = rng.random_range(start_min..n - len);
        let mut prev = 0.0;
        for k in 0..len {
            let w = 0.5 - 0.5 * (TAU * k as f64 / len as f64).cos();
            let white: f64 = rng.sample(StandardNormal);
            // first difference tilts the burst towards high frequencies
            out[start + k] += 0.6 * rms * w * (white - prev);
            prev = white;
        }
    }

    let rms = (out.iter().map(|x| x * x).sum::<f64>() / n as f64).sqrt().max(1e-12);
    out.iter_mut().for_each(|x| *x /= rms);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn window_rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn gaussian_is_white() {
        let s = make_source(SourceKind::Gaussian, 1.0, 16000, 11).unwrap();
        assert_eq!(s.len(), 16000);
        let x = s.samples();
        let var: f64 = x.iter().map(|v| v * v).sum::<f64>();
        for lag in 1..20 {
            let r: f64 = x.iter().zip(&x[lag..]).map(|(a, b)| a * b).sum::<f64>() / var;
            assert!(r.abs() < 0.05, "lag {lag}: {r}");
        }
    }

    #[test]
    fn speech_like_ramps_up_slowly() {
        for seed in 0..5 {
            let s = make_source(SourceKind::SpeechLike, 1.0, 16000, seed).unwrap();
            let x = s.samples();
            let w = 800;
            let first = window_rms(&x[..w]);
            let peak = x.chunks(w).map(window_rms).fold(0.0, f64::max);
            assert!(first < 0.25 * peak, "seed {seed}: {first} vs {peak}");
        }
    }

    #[test]
    fn deterministic_per_seed() {
        for kind in [SourceKind::Gaussian, SourceKind::SpeechLike, SourceKind::Chirp] {
            let a = make_source(kind, 0.3, 16000, 5).unwrap();
            let b = make_source(kind, 0.3, 16000, 5).unwrap();
            assert_eq!(a, b);
        }
        let a = make_source(SourceKind::Gaussian, 0.3, 16000, 5).unwrap();
        let b = make_source(SourceKind::Gaussian, 0.3, 16000, 6).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn rejects_non_positive_duration() {
        assert!(make_source(SourceKind::Chirp, 0.0, 16000, 1).is_err());
    }
}
