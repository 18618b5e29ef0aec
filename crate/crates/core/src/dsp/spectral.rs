use rustfft::num_complex::Complex;

use super::{check_rates, Correlation, ImpulseResponse, Signal};
use crate::error::{Error, Result};
use crate::num::Real;

/// Default Tikhonov weight, relative to the peak power of the divisor spectrum.
pub const DEFAULT_REG: f64 = 1e-3;

/// Below this many multiply-adds the direct sum beats the FFT path.
const DIRECT_CONV_LIMIT: usize = 4096;

/// Smallest FFT length `>= n` with only small prime factors.
pub fn next_fft_len(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

/// Zero-padded DFT of a real sequence.
#[derive(Debug, Clone)]
pub struct Spectrum<T> {
    bins: Vec<Complex<T>>,
}

impl<T: Real> Spectrum<T> {
    /// Transforms `x` zero-padded (or truncated) to `n` points.
    pub fn of(x: &[T], n: usize) -> Self {
        let mut bins: Vec<Complex<T>> = x.iter().take(n).map(|&v| Complex::new(v, T::zero())).collect();
        bins.resize(n, Complex::new(T::zero(), T::zero()));
        T::with_planner(|p| p.plan_fft_forward(n).process(&mut bins));
        Self { bins }
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn bins(&self) -> &[Complex<T>] {
        &self.bins
    }

    pub(crate) fn from_bins(bins: Vec<Complex<T>>) -> Self {
        Self { bins }
    }

    /// Peak squared magnitude over all bins.
    pub fn peak_power(&self) -> T {
        self.bins.iter().fold(T::zero(), |m, c| m.max(c.norm_sqr()))
    }

    /// Elementwise `self * conj(other)`.
    pub fn cross(&self, other: &Self) -> Self {
        debug_assert_eq!(self.len(), other.len());
        Self { bins: self.bins.iter().zip(&other.bins).map(|(a, b)| a * b.conj()).collect() }
    }

    /// Regularized spectral division `self * conj(d) / (|d|^2 + reg * max|d|^2)`.
    pub fn tikhonov_divide(&self, divisor: &Self, reg: T) -> Self {
        debug_assert_eq!(self.len(), divisor.len());
        let floor = reg * divisor.peak_power();
        let bins = self
            .bins
            .iter()
            .zip(&divisor.bins)
            .map(|(x, d)| {
                let den = d.norm_sqr() + floor;
                if den > T::zero() {
                    x * d.conj() / den
                } else {
                    Complex::new(T::zero(), T::zero())
                }
            })
            .collect();
        Self { bins }
    }

    /// Inverse DFT, real part, scaled by `1/n`.
    pub fn inverse(&self) -> Vec<T> {
        let n = self.bins.len();
        let mut buf = self.bins.clone();
        T::with_planner(|p| p.plan_fft_inverse(n).process(&mut buf));
        let scale = T::one() / T::from_usize(n).unwrap();
        buf.into_iter().map(|c| c.re * scale).collect()
    }
}

fn convolve_slices<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    if a.len().min(b.len()) <= 16 || a.len() * b.len() <= DIRECT_CONV_LIMIT {
        let mut out = vec![T::zero(); out_len];
        for (i, &x) in a.iter().enumerate() {
            if x == T::zero() {
                continue;
            }
            for (o, &y) in out[i..].iter_mut().zip(b) {
                *o += x * y;
            }
        }
        return out;
    }
    let n = next_fft_len(out_len);
    let sa = Spectrum::of(a, n);
    let sb = Spectrum::of(b, n);
    let prod = Spectrum::from_bins(sa.bins.iter().zip(&sb.bins).map(|(x, y)| x * y).collect());
    let mut out = prod.inverse();
    out.truncate(out_len);
    out
}

/// Linear convolution; output length is `len(v) + len(h) - 1`.
pub fn convolve<T: Real>(v: &Signal<T>, h: &ImpulseResponse<T>) -> Result<Signal<T>> {
    v.check_rate(h.sample_rate())?;
    if v.is_empty() {
        return Ok(Signal::zeros(0, v.sample_rate()));
    }
    Ok(Signal::from_trusted(convolve_slices(v.samples(), h.taps()), v.sample_rate()))
}

/// Correlation `values[l] = sum_t a(t) * b(t - l)` for `l` in `[-max_lag, max_lag]`.
pub fn cross_correlate<T: Real>(a: &Signal<T>, b: &Signal<T>, max_lag: usize) -> Result<Correlation<T>> {
    check_rates(&[a, b])?;
    let shortest = a.len().min(b.len());
    if max_lag >= shortest {
        return Err(Error::InvalidInput(format!("max_lag {max_lag} must be below the shorter length {shortest}")));
    }
    let n = next_fft_len(a.len().max(b.len()) + max_lag);
    let circ = Spectrum::of(a.samples(), n).cross(&Spectrum::of(b.samples(), n)).inverse();
    Ok(two_sided(&circ, max_lag))
}

/// Extracts lags `[-max_lag, max_lag]` from a circular correlation buffer.
pub(crate) fn two_sided<T: Real>(circ: &[T], max_lag: usize) -> Correlation<T> {
    let n = circ.len();
    let m = max_lag as i64;
    let lags: Vec<i64> = (-m..=m).collect();
    let values = lags.iter().map(|&l| circ[l.rem_euclid(n as i64) as usize]).collect();
    Correlation { lags, values }
}

/// Channel estimate for lags `[-pre, len - pre)` such that `x ~ v * h`.
///
/// Frequency-domain division with Tikhonov regularization; `reg` is taken
/// relative to the peak power of `V`.
pub fn deconvolve_window<T: Real>(
    x: &Signal<T>,
    v: &Signal<T>,
    pre: usize,
    len: usize,
    reg: T,
) -> Result<ImpulseResponse<T>> {
    check_rates(&[x, v])?;
    if len == 0 {
        return Err(Error::InvalidInput("channel length must be at least one tap".into()));
    }
    if reg < T::zero() || !reg.is_finite() {
        return Err(Error::InvalidInput("regularization must be finite and non-negative".into()));
    }
    if v.samples().iter().all(|&s| s == T::zero()) {
        return Err(Error::Degenerate("deconvolution by an all-zero signal".into()));
    }
    let n = next_fft_len(x.len().max(v.len()) + len);
    let h = Spectrum::of(x.samples(), n).tikhonov_divide(&Spectrum::of(v.samples(), n), reg).inverse();
    let taps = (0..len).map(|k| h[(k as i64 - pre as i64).rem_euclid(n as i64) as usize]).collect();
    Ok(ImpulseResponse::from_trusted(taps, x.sample_rate()))
}

/// Causal channel estimate of `channel_len` taps such that `x ~ v * h`.
pub fn deconvolve<T: Real>(x: &Signal<T>, v: &Signal<T>, channel_len: usize, reg: T) -> Result<ImpulseResponse<T>> {
    if v.len() < channel_len {
        return Err(Error::InvalidInput(format!(
            "source length {} is shorter than the requested channel length {channel_len}",
            v.len()
        )));
    }
    deconvolve_window(x, v, 0, channel_len, reg)
}

/// Recovers `y` from `x ~ y * h` where `h[zero_lag]` sits at lag zero.
///
/// Output has the length of `x`. Circular over a padded FFT frame.
pub fn inverse_filter<T: Real>(x: &Signal<T>, h: &ImpulseResponse<T>, zero_lag: usize, reg: T) -> Result<Signal<T>> {
    x.check_rate(h.sample_rate())?;
    if h.taps().iter().all(|&t| t == T::zero()) {
        return Err(Error::Degenerate("inverse filter of an all-zero channel".into()));
    }
    let n = next_fft_len(x.len() + h.len());
    let y = Spectrum::of(x.samples(), n).tikhonov_divide(&Spectrum::of(h.taps(), n), reg).inverse();
    let out = (0..x.len()).map(|t| y[(t as i64 - zero_lag as i64).rem_euclid(n as i64) as usize]).collect();
    Ok(Signal::from_trusted(out, x.sample_rate()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sig(v: &[f64]) -> Signal<f64> {
        Signal::new(v.to_vec(), 16000).unwrap()
    }

    fn ir(v: &[f64]) -> ImpulseResponse<f64> {
        ImpulseResponse::new(v.to_vec(), 16000).unwrap()
    }

    #[test]
    fn convolve_identity_and_delay() {
        assert_eq!(convolve(&sig(&[1.0, 2.0, 3.0]), &ir(&[1.0])).unwrap().samples(), &[1.0, 2.0, 3.0]);
        assert_eq!(convolve(&sig(&[1.0, 0.0, 0.0]), &ir(&[0.0, 0.5])).unwrap().samples(), &[0.0, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn convolve_rejects_rate_mismatch() {
        let h = ImpulseResponse::new(vec![1.0], 8000).unwrap();
        assert!(matches!(convolve(&sig(&[1.0]), &h), Err(Error::SampleRateMismatch { .. })));
    }

    #[test]
    fn autocorrelation_peaks_at_zero() {
        let a = sig(&[1.0, 1.0, 1.0]);
        let c = cross_correlate(&a, &a, 2).unwrap();
        assert_eq!(c.argmax_lag(), 0);
        for (got, want) in c.values.iter().zip([1.0, 2.0, 3.0, 2.0, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn correlate_lag_bound() {
        let a = sig(&[1.0, 2.0]);
        assert!(cross_correlate(&a, &a, 2).is_err());
    }

    #[test]
    fn deconvolve_rejects_zero_source() {
        let z = sig(&[0.0; 64]);
        assert!(matches!(deconvolve(&sig(&[1.0; 64]), &z, 8, 1e-3), Err(Error::Degenerate(_))));
    }

    #[test]
    fn deconvolve_self_is_impulse() {
        let mut state = 12345u64;
        let v: Vec<f64> = (0..512)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect();
        let s = sig(&v);
        let h = deconvolve(&s, &s, 32, 1e-3).unwrap();
        // Tikhonov shrinkage of weak bins costs a few percent of the peak
        assert!((h.taps()[0] - 1.0).abs() < 0.05, "{}", h.taps()[0]);
        assert!(h.taps()[1..].iter().all(|t| t.abs() < 0.01));
    }

    #[test]
    fn window_reads_negative_lags() {
        let v: Vec<f64> = (0..256).map(|i| ((i * 31) % 17) as f64 - 8.0).collect();
        // x is v advanced by 3 samples: the channel sits at lag -3
        let x: Vec<f64> = v[3..].iter().copied().chain([0.0; 3]).collect();
        let h = deconvolve_window(&sig(&x), &sig(&v), 10, 32, 1e-6).unwrap();
        assert_eq!(h.argmax().0, 7);
    }

    #[test]
    fn inverse_filter_undoes_known_channel() {
        let v: Vec<f64> = (0..300).map(|i| ((i * 13) % 11) as f64 - 5.0).collect();
        let h = ir(&[0.2, 1.0, 0.3]);
        let x = convolve(&sig(&v), &h).unwrap();
        let y = inverse_filter(&x, &h, 1, 1e-9).unwrap();
        // h peaks at index 1, so x carries one extra sample of delay that stays in y
        for t in 10..290 {
            assert!((y.samples()[t] - v[t - 1]).abs() < 1e-3, "t={t}");
        }
    }
}
