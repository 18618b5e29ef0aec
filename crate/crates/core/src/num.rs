//! Scalar abstraction shared by the signal-processing kernels.

use std::cell::RefCell;
use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};
use rustfft::{FftNum, FftPlanner};

/// Floating point scalar usable by every DSP kernel: `f32` or `f64`.
pub trait Real: Float + FloatConst + FromPrimitive + NumAssign + FftNum + Sum + Default + Display + Debug {
    /// Runs `f` with this thread's cached FFT planner for the scalar type.
    fn with_planner<R>(f: impl FnOnce(&mut FftPlanner<Self>) -> R) -> R;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal is representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

thread_local! {
    static PLANNER_F32: RefCell<FftPlanner<f32>> = RefCell::new(FftPlanner::new());
    static PLANNER_F64: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

impl Real for f32 {
    fn with_planner<R>(f: impl FnOnce(&mut FftPlanner<Self>) -> R) -> R {
        PLANNER_F32.with(|p| f(&mut p.borrow_mut()))
    }
}

impl Real for f64 {
    fn with_planner<R>(f: impl FnOnce(&mut FftPlanner<Self>) -> R) -> R {
        PLANNER_F64.with(|p| f(&mut p.borrow_mut()))
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_pi<T: Real>(a: T) -> T {
    let two_pi = T::PI() + T::PI();
    let mut r = a % two_pi;
    if r > T::PI() {
        r -= two_pi;
    } else if r <= -T::PI() {
        r += two_pi;
    }
    r
}

/// Wraps an angle into `[0, 2pi)`.
pub fn wrap_two_pi<T: Real>(a: T) -> T {
    let two_pi = T::PI() + T::PI();
    let mut r = a % two_pi;
    if r < T::zero() {
        r += two_pi;
    }
    if r >= two_pi {
        r -= two_pi;
    }
    r
}

/// Pearson correlation; zero when either input has no variance.
pub fn pearson<T: Real>(a: &[T], b: &[T]) -> T {
    assert_eq!(a.len(), b.len(), "pearson: length mismatch");
    if a.is_empty() {
        return T::zero();
    }
    let n = T::from_usize(a.len()).unwrap();
    let ma = a.iter().copied().sum::<T>() / n;
    let mb = b.iter().copied().sum::<T>() / n;
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let denom = (saa * sbb).sqrt();
    let tiny = T::epsilon() * T::lit(16.0);
    // variance below rounding noise of the mean counts as none
    let scale_a = a.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    let scale_b = b.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    if saa.sqrt() <= tiny * scale_a * n.sqrt() || sbb.sqrt() <= tiny * scale_b * n.sqrt() || denom == T::zero() {
        return T::zero();
    }
    sab / denom
}

/// Median of a slice of finite values (mean of the middle pair for even length).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len().is_multiple_of(2) { 0.5 * (v[mid - 1] + v[mid]) } else { v[mid] })
}
