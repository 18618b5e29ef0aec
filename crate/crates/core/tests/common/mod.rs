//! DSP oracle properties shared by the property tests and the acceptance run.

#![allow(dead_code)]

use facedir::aoa::gcc_phat;
use facedir::dsp::{
    convolve, cross_correlate, deconvolve, delay_sum_aoa, fractional_shift, integer_shift, inverse_filter,
    ImpulseResponse, Signal,
};
use facedir::facing::steering_delays;
use facedir::scene::{DevicePose, Point};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestError, TestRunner};

pub const FS: u32 = 16_000;

pub fn samples(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, len)
}

fn direct_convolution(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Two cascaded moving averages: keeps most energy well below Nyquist, where
/// the fractional-delay kernel is accurate.
pub fn lowpass(x: &[f64], width: usize) -> Vec<f64> {
    let pass = |x: &[f64]| -> Vec<f64> {
        (0..x.len()).map(|i| x[i.saturating_sub(width - 1)..=i].iter().sum::<f64>() / width as f64).collect()
    };
    pass(&pass(x))
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

pub fn fft_convolution_matches_direct(a: Vec<f64>, b: Vec<f64>) -> Result<(), TestCaseError> {
    let got = convolve(&Signal::new(a.clone(), FS).unwrap(), &ImpulseResponse::new(b.clone(), FS).unwrap()).unwrap();
    let want = direct_convolution(&a, &b);
    prop_assert_eq!(got.len(), want.len());
    for (g, w) in got.samples().iter().zip(&want) {
        prop_assert!((g - w).abs() < 1e-9, "{} vs {}", g, w);
    }
    Ok(())
}

pub fn correlation_matches_direct(a: Vec<f64>, b: Vec<f64>, max_lag: usize) -> Result<(), TestCaseError> {
    let max_lag = max_lag.min(a.len().min(b.len()) - 1);
    let c =
        cross_correlate(&Signal::new(a.clone(), FS).unwrap(), &Signal::new(b.clone(), FS).unwrap(), max_lag).unwrap();
    for (&l, &v) in c.lags.iter().zip(&c.values) {
        let want: f64 = (0..a.len())
            .filter_map(|t| {
                let s = t as i64 - l;
                (s >= 0 && (s as usize) < b.len()).then(|| a[t] * b[s as usize])
            })
            .sum();
        prop_assert!((v - want).abs() < 1e-9, "lag {}: {} vs {}", l, v, want);
    }
    Ok(())
}

pub fn deconvolution_round_trip(v: Vec<f64>, h: Vec<f64>) -> Result<(), TestCaseError> {
    let vs = Signal::new(v, FS).unwrap();
    let hs = ImpulseResponse::new(h.clone(), FS).unwrap();
    let x = convolve(&vs, &hs).unwrap();
    let est = deconvolve(&x, &vs, h.len(), 1e-9).unwrap();
    let scale = h.iter().fold(0.0f64, |m, t| m.max(t.abs())).max(1e-3);
    for (e, t) in est.taps().iter().zip(&h) {
        prop_assert!((e - t).abs() < 1e-3 * scale, "{} vs {}", e, t);
    }
    let back = inverse_filter(&x, &hs, 0, 1e-9).unwrap();
    for (b, s) in back.samples().iter().zip(vs.samples()) {
        prop_assert!((b - s).abs() < 1e-3, "{} vs {}", b, s);
    }
    Ok(())
}

pub fn gcc_phat_recovers_shift(a: Vec<f64>, shift: i64) -> Result<(), TestCaseError> {
    let b = integer_shift(&a, shift);
    let c = gcc_phat(&Signal::new(a, FS).unwrap(), &Signal::new(b, FS).unwrap(), 40).unwrap();
    prop_assert_eq!(c.argmax_lag(), -shift);
    Ok(())
}

pub fn fractional_shifts_compose(x: Vec<f64>, d1: f64, d2: f64) -> Result<(), TestCaseError> {
    let x = lowpass(&x, 6);
    let once = fractional_shift(&x, d1 + d2);
    let twice = fractional_shift(&fractional_shift(&x, d1), d2);
    let interior = 40..x.len() - 40;
    let err = rms(&once[interior.clone()].iter().zip(&twice[interior.clone()]).map(|(a, b)| a - b).collect::<Vec<_>>());
    prop_assert!(err < 0.02 * rms(&x[interior]).max(1e-9), "err {}", err);
    Ok(())
}

pub fn delay_sum_coherent_gain(s: Vec<f64>, mics: usize, radius: f64, angle: f64) -> Result<(), TestCaseError> {
    let s = lowpass(&s, 6);
    let device = DevicePose::new(Point::new(0.0, 0.0), 0.3).with_array(mics, radius);
    let delays = steering_delays(&device, angle, FS);
    // a plane wave from `angle` reaches mic m early by delays[m]
    let recorded: Vec<Signal<f64>> =
        delays.iter().map(|&d| Signal::new(fractional_shift(&s, -d), FS).unwrap()).collect();
    let sum = delay_sum_aoa(&recorded, &delays).unwrap();
    let interior = 40..s.len() - 40;
    let gain = rms(&sum.samples()[interior.clone()]) / rms(&recorded[0].samples()[interior]);
    prop_assert!(gain >= 0.98 * mics as f64, "gain {} for {} mics", gain, mics);
    Ok(())
}

fn describe<T>(e: TestError<T>) -> String {
    match e {
        TestError::Abort(r) => format!("aborted: {r}"),
        TestError::Fail(r, _) => r.to_string(),
    }
}

/// Runs every DSP oracle with `cases` random cases each; returns failures by name.
pub fn run_dsp_oracles(cases: u32) -> Vec<(&'static str, String)> {
    let mut failures = Vec::new();
    let config = || Config { cases, failure_persistence: None, ..Config::default() };
    let mut record = |name: &'static str, r: Result<(), String>| {
        if let Err(e) = r {
            failures.push((name, e.to_string()));
        }
    };
    let mut run = TestRunner::new(config());
    record(
        "fft_convolution",
        run.run(&(samples(17..300), samples(17..200)), |(a, b)| fft_convolution_matches_direct(a, b)).map_err(describe),
    );
    let mut run = TestRunner::new(config());
    record(
        "correlation",
        run.run(&(samples(2..200), samples(2..200), 0usize..60), |(a, b, l)| correlation_matches_direct(a, b, l))
            .map_err(describe),
    );
    let mut run = TestRunner::new(config());
    record(
        "deconvolution",
        run.run(&(samples(256..600), samples(1..32)), |(v, h)| deconvolution_round_trip(v, h)).map_err(describe),
    );
    let mut run = TestRunner::new(config());
    record(
        "gcc_phat",
        run.run(&(samples(512..1024), -30i64..30), |(a, s)| gcc_phat_recovers_shift(a, s)).map_err(describe),
    );
    let mut run = TestRunner::new(config());
    record(
        "fractional_shift",
        run.run(&(samples(256..512), -5.0f64..5.0, -5.0f64..5.0), |(x, a, b)| fractional_shifts_compose(x, a, b))
            .map_err(describe),
    );
    let mut run = TestRunner::new(config());
    record(
        "delay_sum",
        run.run(&(samples(512..1024), 4usize..9, 0.03f64..0.06, 0.0f64..std::f64::consts::TAU), |(s, m, r, a)| {
            delay_sum_coherent_gain(s, m, r, a)
        })
        .map_err(describe),
    );
    failures
}
