//! Signal-processing primitives: convolution, correlation, regularized
//! deconvolution, fractional delay and the two alignment sums used to
//! combine microphones within a device and across devices.
//!
//! All kernels are generic over the scalar type (see [`Real`]); the crate
//! root exposes `f64` aliases.

mod delay;
mod spectral;

pub use delay::{
    align_correlate, align_correlate_with_lags, delay_sum_aoa, fractional_delay_kernel, fractional_shift,
    integer_shift, KERNEL_HALF_WIDTH, KERNEL_TAPS,
};
pub use spectral::{
    convolve, cross_correlate, deconvolve, deconvolve_window, inverse_filter, next_fft_len, Spectrum, DEFAULT_REG,
};

pub(crate) use delay::interpolate_at;
pub(crate) use spectral::two_sided;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

/// Uniformly sampled real waveform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal<T> {
    samples: Vec<T>,
    sample_rate: u32,
}

impl<T: Real> Signal<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, sample_rate })
    }

    /// Builds a signal whose samples are known to be finite.
    pub(crate) fn from_trusted(samples: Vec<T>, sample_rate: u32) -> Self {
        debug_assert!(sample_rate > 0);
        debug_assert!(samples.iter().all(|x| x.is_finite()));
        Self { samples, sample_rate }
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self::from_trusted(vec![T::zero(); len], sample_rate)
    }

    #[inline]
    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    #[inline]
    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn energy(&self) -> T {
        self.samples.iter().map(|&x| x * x).sum()
    }

    pub fn rms(&self) -> T {
        if self.samples.is_empty() {
            return T::zero();
        }
        (self.energy() / T::from_usize(self.samples.len()).unwrap()).sqrt()
    }

    pub fn scaled(&self, gain: T) -> Self {
        Self::from_trusted(self.samples.iter().map(|&x| x * gain).collect(), self.sample_rate)
    }

    /// Zero-pads or truncates to exactly `len` samples.
    pub fn resized(&self, len: usize) -> Self {
        let mut s = self.samples.clone();
        s.resize(len, T::zero());
        Self::from_trusted(s, self.sample_rate)
    }

    pub fn slice(&self, start: usize, end: usize) -> Self {
        let end = end.min(self.len());
        let start = start.min(end);
        Self::from_trusted(self.samples[start..end].to_vec(), self.sample_rate)
    }

    pub(crate) fn check_rate(&self, other_rate: u32) -> Result<()> {
        if self.sample_rate != other_rate {
            return Err(Error::SampleRateMismatch { left: self.sample_rate, right: other_rate });
        }
        Ok(())
    }
}

/// Finite tap vector modelling an acoustic channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpulseResponse<T> {
    taps: Vec<T>,
    sample_rate: u32,
}

impl<T: Real> ImpulseResponse<T> {
    pub fn new(taps: Vec<T>, sample_rate: u32) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::InvalidInput("impulse response needs at least one tap".into()));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        if let Some(i) = taps.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite tap at index {i}")));
        }
        Ok(Self { taps, sample_rate })
    }

    pub(crate) fn from_trusted(taps: Vec<T>, sample_rate: u32) -> Self {
        debug_assert!(!taps.is_empty() && sample_rate > 0);
        Self { taps, sample_rate }
    }

    /// Unit impulse at lag 0, `len` taps long.
    pub fn unit(len: usize, sample_rate: u32) -> Self {
        let mut taps = vec![T::zero(); len.max(1)];
        taps[0] = T::one();
        Self::from_trusted(taps, sample_rate)
    }

    #[inline]
    pub fn taps(&self) -> &[T] {
        &self.taps
    }

    #[inline]
    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.taps.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn into_taps(self) -> Vec<T> {
        self.taps
    }

    pub fn energy(&self) -> T {
        self.taps.iter().map(|&x| x * x).sum()
    }

    /// Index and value of the largest tap (first one on ties).
    pub fn argmax(&self) -> (usize, T) {
        argmax(&self.taps)
    }

    /// Views the channel as a signal (used when channels feed correlation-based estimators).
    pub fn to_signal(&self) -> Signal<T> {
        Signal::from_trusted(self.taps.clone(), self.sample_rate)
    }
}

/// Two-sided correlation curve: `values[i]` belongs to lag `lags[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Correlation<T> {
    pub lags: Vec<i64>,
    pub values: Vec<T>,
}

impl<T: Real> Correlation<T> {
    pub fn max_lag(&self) -> usize {
        self.lags.last().copied().unwrap_or(0).max(0) as usize
    }

    /// Lag with the largest value; ties go to the smallest lag.
    pub fn argmax_lag(&self) -> i64 {
        self.lags[argmax(&self.values).0]
    }

    /// Value at integer lag `lag`, zero outside the computed range.
    pub fn at(&self, lag: i64) -> T {
        let m = self.max_lag() as i64;
        if lag < -m || lag > m {
            return T::zero();
        }
        self.values[(lag + m) as usize]
    }
}

/// First index of the maximum value.
pub(crate) fn argmax<T: Real>(values: &[T]) -> (usize, T) {
    let mut best = (0, T::neg_infinity());
    for (i, &v) in values.iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

pub(crate) fn check_rates<T: Real>(signals: &[&Signal<T>]) -> Result<u32> {
    let rate = signals.first().map(|s| s.sample_rate()).unwrap_or(1);
    for s in signals {
        s.check_rate(rate)?;
    }
    Ok(rate)
}
