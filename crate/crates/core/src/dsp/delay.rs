use super::{check_rates, cross_correlate, Signal};
use crate::error::{Error, Result};
use crate::num::Real;

/// Taps in the Hann-windowed sinc interpolator.
pub const KERNEL_TAPS: usize = 31;
/// Taps on either side of the centre tap.
pub const KERNEL_HALF_WIDTH: usize = KERNEL_TAPS / 2;

fn windowed_sinc<T: Real>(t: T) -> T {
    let half = T::lit(KERNEL_HALF_WIDTH as f64 + 1.0);
    if t.abs() >= half {
        return T::zero();
    }
    let pi = T::PI();
    let sinc = if t == T::zero() { T::one() } else { (pi * t).sin() / (pi * t) };
    let window = T::lit(0.5) * (T::one() + (pi * t / half).cos());
    sinc * window
}

/// Interpolator taps `g(k - frac)` for `k` in `-15..=15`.
pub fn fractional_delay_kernel<T: Real>(frac: T) -> [T; KERNEL_TAPS] {
    let mut taps = [T::zero(); KERNEL_TAPS];
    for (i, t) in taps.iter_mut().enumerate() {
        let k = T::lit(i as f64 - KERNEL_HALF_WIDTH as f64);
        *t = windowed_sinc(k - frac);
    }
    taps
}

/// Band-limited interpolation of `x` at the (possibly fractional) position `pos`.
pub(crate) fn interpolate_at<T: Real>(x: &[T], pos: T) -> T {
    let base = pos.floor();
    let frac = pos - base;
    let base = base.to_i64().unwrap_or(i64::MIN / 2);
    let kernel = fractional_delay_kernel(frac);
    let mut acc = T::zero();
    for (i, &g) in kernel.iter().enumerate() {
        let m = base + i as i64 - KERNEL_HALF_WIDTH as i64;
        if m >= 0 && (m as usize) < x.len() {
            acc += x[m as usize] * g;
        }
    }
    acc
}

/// `y[n] = x(n - delay)` with windowed-sinc interpolation; same length as `x`.
pub fn fractional_shift<T: Real>(x: &[T], delay: T) -> Vec<T> {
    let whole = delay.floor();
    let frac = delay - whole;
    let whole = whole.to_i64().unwrap_or(0);
    if frac == T::zero() {
        return integer_shift(x, whole);
    }
    let kernel = fractional_delay_kernel(frac);
    let len = x.len() as i64;
    let half = KERNEL_HALF_WIDTH as i64;
    (0..len)
        .map(|n| {
            let mut acc = T::zero();
            for (i, &g) in kernel.iter().enumerate() {
                let m = n - whole - (i as i64 - half);
                if m >= 0 && m < len {
                    acc += x[m as usize] * g;
                }
            }
            acc
        })
        .collect()
}

/// `y[n] = x[n - shift]`, zero-filled, same length as `x`.
pub fn integer_shift<T: Real>(x: &[T], shift: i64) -> Vec<T> {
    let len = x.len() as i64;
    (0..len)
        .map(|n| {
            let m = n - shift;
            if m >= 0 && m < len {
                x[m as usize]
            } else {
                T::zero()
            }
        })
        .collect()
}

/// Local delay-and-sum: shifts each microphone by its fractional delay and sums.
pub fn delay_sum_aoa<T: Real>(mics: &[Signal<T>], delays: &[T]) -> Result<Signal<T>> {
    if mics.is_empty() {
        return Err(Error::InvalidInput("delay-and-sum needs at least one microphone".into()));
    }
    if mics.len() != delays.len() {
        return Err(Error::LengthMismatch(format!("{} microphones but {} delays", mics.len(), delays.len())));
    }
    let refs: Vec<&Signal<T>> = mics.iter().collect();
    let rate = check_rates(&refs)?;
    let len = mics[0].len();
    if let Some(bad) = mics.iter().position(|m| m.len() != len) {
        return Err(Error::LengthMismatch(format!("microphone {bad} has {} samples, expected {len}", mics[bad].len())));
    }
    if delays.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidInput("non-finite delay".into()));
    }
    let mut out = vec![T::zero(); len];
    for (m, &d) in mics.iter().zip(delays) {
        for (o, s) in out.iter_mut().zip(fractional_shift(m.samples(), d)) {
            *o += s;
        }
    }
    Ok(Signal::from_trusted(out, rate))
}

/// Global align-on-correlation with the integer lags that were applied.
///
/// `lags[j]` is the correlation argmax of `signals[j]` against `signals[0]`;
/// the output is `sum_j signals[j](t - lags[j])`, truncated to `signals[0]`'s length.
pub fn align_correlate_with_lags<T: Real>(
    signals: &[Signal<T>],
    max_lag: Option<usize>,
) -> Result<(Signal<T>, Vec<i64>)> {
    if signals.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "align-on-correlation needs at least 2 signals, got {}",
            signals.len()
        )));
    }
    let refs: Vec<&Signal<T>> = signals.iter().collect();
    let rate = check_rates(&refs)?;
    let shortest = signals.iter().map(Signal::len).min().unwrap_or(0);
    if shortest < 2 {
        return Err(Error::InvalidInput("signals are too short to align".into()));
    }
    let max_lag = max_lag.unwrap_or(shortest / 2).min(shortest - 1);
    let reference = &signals[0];
    let len = reference.len();
    let mut out = reference.samples().to_vec();
    let mut lags = vec![0i64];
    for s in &signals[1..] {
        let lag = cross_correlate(reference, s, max_lag)?.argmax_lag();
        lags.push(lag);
        let shifted = integer_shift(&s.resized(len).into_samples(), lag);
        for (o, v) in out.iter_mut().zip(shifted) {
            *o += v;
        }
    }
    Ok((Signal::from_trusted(out, rate), lags))
}

/// Global align-on-correlation sum `V = sum_j X_j(t - delta_j)`.
pub fn align_correlate<T: Real>(signals: &[Signal<T>]) -> Result<Signal<T>> {
    align_correlate_with_lags(signals, None).map(|(s, _)| s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_is_identity_at_zero_fraction() {
        let k = fractional_delay_kernel(0.0f64);
        for (i, &v) in k.iter().enumerate() {
            let want = if i == KERNEL_HALF_WIDTH { 1.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-15);
        }
    }

    #[test]
    fn integer_shift_fills_zeros() {
        assert_eq!(integer_shift(&[1.0, 2.0, 3.0], 1), vec![0.0, 1.0, 2.0]);
        assert_eq!(integer_shift(&[1.0, 2.0, 3.0], -2), vec![3.0, 0.0, 0.0]);
    }

    #[test]
    fn coherent_sum_of_identical_inputs() {
        let x = Signal::new(vec![0.5, -1.0, 2.0, 0.25], 16000).unwrap();
        let y = delay_sum_aoa(&vec![x.clone(); 4], &[0.0; 4]).unwrap();
        for (a, b) in y.samples().iter().zip(x.samples()) {
            assert_eq!(*a, 4.0 * b);
        }
    }

    #[test]
    fn delay_sum_rejects_mismatch() {
        let a = Signal::new(vec![0.0; 4], 16000).unwrap();
        let b = Signal::new(vec![0.0; 5], 16000).unwrap();
        assert!(delay_sum_aoa(&[a.clone(), b], &[0.0, 0.0]).is_err());
        assert!(delay_sum_aoa(&[a.clone(), a], &[0.0]).is_err());
    }

    #[test]
    fn align_needs_two_signals() {
        let a = Signal::new(vec![1.0; 8], 16000).unwrap();
        assert!(align_correlate(&[a]).is_err());
    }

    #[test]
    fn interpolate_hits_samples() {
        let x = [0.0, 1.0, -2.0, 3.0];
        for (i, &v) in x.iter().enumerate() {
            assert!((interpolate_at(&x, i as f64) - v).abs() < 1e-12);
        }
    }
}
