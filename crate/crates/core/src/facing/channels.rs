//! Blind joint estimation of the source waveform and per-device channels.

use crate::dsp::{align_correlate_with_lags, integer_shift, inverse_filter, next_fft_len, Spectrum, DEFAULT_REG};
use crate::error::{Error, Result};
use crate::{ImpulseResponse, Signal};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// Stop once the relative L2 change of the source estimate drops below this.
    pub delta: f64,
    pub max_iters: usize,
    /// Channel window length, seconds.
    pub channel_secs: f64,
    /// Part of the window before the zero lag, seconds; catches a direct path
    /// that arrives ahead of the strongest component.
    pub lead_secs: f64,
    /// Tikhonov regularization relative to the divisor's peak power.
    pub reg: f64,
    /// Largest inter-device lag searched when aligning devices, seconds.
    pub max_align_secs: f64,
    pub update: SourceUpdate,
}

/// How the next source estimate is formed from the global channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SourceUpdate {
    /// Deconvolve the aligned device sum, which is modelled as source * global channel.
    #[default]
    AlignedSum,
    /// Deconvolve the previous source estimate.
    Previous,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            delta: 1e-3,
            max_iters: 20,
            channel_secs: 0.1,
            lead_secs: 0.02,
            reg: DEFAULT_REG,
            max_align_secs: 0.05,
            update: SourceUpdate::AlignedSum,
        }
    }
}

/// State after one pass of the loop.
#[derive(Debug, Clone, PartialEq)]
pub struct Iteration {
    /// Source estimate the channels were computed against, unit RMS.
    pub source: Signal,
    /// One channel per device; tap `zero_lag` is lag 0.
    pub channels: Vec<ImpulseResponse>,
    /// Peak-aligned sum of the rectified device channels.
    pub global: ImpulseResponse,
    /// Relative L2 change from `source` to the next estimate.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub iterations: Vec<Iteration>,
    /// Integer lags that aligned each device to device 0 before estimation.
    pub alignment_lags: Vec<i64>,
    /// Index of lag 0 in every channel.
    pub zero_lag: usize,
    pub converged: bool,
    /// Residual grew three iterations in a row; `selected` is then the
    /// iteration with the smallest residual.
    pub diverged: bool,
    /// Iteration whose channels are the result.
    pub selected: usize,
}

impl IterationTrace {
    pub fn iterations_used(&self) -> usize {
        self.iterations.len()
    }

    pub fn residuals(&self) -> Vec<f64> {
        self.iterations.iter().map(|it| it.residual).collect()
    }

    pub fn channels(&self) -> &[ImpulseResponse] {
        &self.iterations[self.selected].channels
    }

    pub fn source(&self) -> &Signal {
        &self.iterations[self.selected].source
    }
}

/// Index of the first of `run` consecutive increases in `residuals`, if any.
pub fn divergence_onset(residuals: &[f64], run: usize) -> Option<usize> {
    let mut streak = 0;
    for k in 1..residuals.len() {
        if residuals[k] > residuals[k - 1] {
            streak += 1;
            if streak >= run {
                return Some(k - run);
            }
        } else {
            streak = 0;
        }
    }
    None
}

fn unit_rms(s: &Signal) -> Result<Signal> {
    let r = s.rms();
    if r == 0.0 {
        return Err(Error::Degenerate("source estimate vanished".into()));
    }
    Ok(s.scaled(1.0 / r))
}

/// Shift that moves each channel's largest tap to `zero_lag`.
pub fn peak_shifts(channels: &[ImpulseResponse], zero_lag: usize) -> Vec<i64> {
    channels.iter().map(|h| zero_lag as i64 - crate::dsp::argmax(h.taps()).0 as i64).collect()
}

fn shifted_rectified_sum(channels: &[ImpulseResponse], shifts: &[i64]) -> ImpulseResponse {
    let len = channels.iter().map(ImpulseResponse::len).max().unwrap_or(0);
    let mut sum = vec![0.0; len];
    for (h, &shift) in channels.iter().zip(shifts) {
        let rect: Vec<f64> = h.taps().iter().map(|&t| t.max(0.0)).collect();
        for (s, v) in sum.iter_mut().zip(integer_shift(&rect, shift)) {
            *s += v;
        }
    }
    ImpulseResponse::from_trusted(sum, channels.first().map_or(1, |h| h.sample_rate()))
}

/// Moves each rectified channel's peak to `zero_lag` and sums them.
pub fn peak_align_sum(channels: &[ImpulseResponse], zero_lag: usize) -> ImpulseResponse {
    shifted_rectified_sum(channels, &peak_shifts(channels, zero_lag))
}

/// Iteratively refines the source estimate and per-device channels from
/// the devices' locally combined signals.
pub fn estimate_channels(per_device: &[Signal], params: &ChannelParams) -> Result<IterationTrace> {
    if per_device.len() < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 devices, got {}", per_device.len())));
    }
    if params.delta.is_nan() || params.delta <= 0.0 || params.max_iters == 0 {
        return Err(Error::InvalidInput("delta must be positive and max_iters at least 1".into()));
    }
    let fs = per_device[0].sample_rate();
    let len = per_device[0].len();
    if let Some(bad) = per_device.iter().position(|x| x.len() != len) {
        return Err(Error::LengthMismatch(format!(
            "device {bad} has {} samples, expected {len}",
            per_device[bad].len()
        )));
    }
    let secs = |s: f64| (s * fs as f64).round() as usize;
    let channel_len = secs(params.channel_secs).max(1);
    let zero_lag = secs(params.lead_secs).min(channel_len - 1);
    let max_lag = secs(params.max_align_secs).min(len.saturating_sub(1));

    let (v0, lags) = align_correlate_with_lags(per_device, Some(max_lag))?;
    let aligned: Vec<Vec<f64>> = per_device.iter().zip(&lags).map(|(x, &l)| integer_shift(x.samples(), l)).collect();
    let n = next_fft_len(len + channel_len);
    let spectra: Vec<Spectrum<f64>> = aligned.iter().map(|x| Spectrum::of(x, n)).collect();

    let deconvolve_all = |v: &Signal| -> Vec<ImpulseResponse> {
        let sv = Spectrum::of(v.samples(), n);
        spectra
            .iter()
            .map(|sx| {
                let h = sx.tikhonov_divide(&sv, params.reg).inverse();
                let taps =
                    (0..channel_len).map(|k| h[(k as i64 - zero_lag as i64).rem_euclid(n as i64) as usize]).collect();
                ImpulseResponse::from_trusted(taps, fs)
            })
            .collect()
    };

    let mut source = unit_rms(&v0)?;
    let mut iterations: Vec<Iteration> = Vec::new();
    let mut converged = false;
    let mut diverged = false;
    // peak shifts are fixed on the first pass so the device sum and the
    // global channel stay consistent and do not jitter between iterations
    let mut shifts: Option<Vec<i64>> = None;
    for _ in 0..params.max_iters {
        let channels = deconvolve_all(&source);
        let shifts = shifts.get_or_insert_with(|| peak_shifts(&channels, zero_lag));
        let global = shifted_rectified_sum(&channels, shifts);
        if global.taps().iter().all(|&t| t <= 0.0) {
            return Err(Error::Degenerate("every device channel is non-positive".into()));
        }
        let mut combined = vec![0.0; len];
        for (x, &shift) in aligned.iter().zip(shifts.iter()) {
            for (c, v) in combined.iter_mut().zip(integer_shift(x, shift)) {
                *c += v;
            }
        }
        let base = match params.update {
            SourceUpdate::AlignedSum => Signal::from_trusted(combined, fs),
            SourceUpdate::Previous => source.clone(),
        };
        let next = unit_rms(&inverse_filter(&base, &global, zero_lag, params.reg)?)?;
        let diff: f64 = next.samples().iter().zip(source.samples()).map(|(a, b)| (a - b) * (a - b)).sum();
        let residual = (diff / source.energy()).sqrt();
        iterations.push(Iteration { source, channels, global, residual });
        if residual < params.delta {
            converged = true;
            break;
        }
        if divergence_onset(&iterations.iter().map(|i| i.residual).collect::<Vec<_>>(), 3).is_some() {
            diverged = true;
            break;
        }
        source = next;
    }
    let selected = if diverged {
        iterations.iter().enumerate().min_by(|a, b| a.1.residual.total_cmp(&b.1.residual)).map(|(i, _)| i).unwrap_or(0)
    } else {
        iterations.len() - 1
    };
    Ok(IterationTrace { iterations, alignment_lags: lags, zero_lag, converged, diverged, selected })
}
