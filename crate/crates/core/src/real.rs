//! Scalar abstraction shared by every grid-level routine.
//!
//! The numerical core is written once against [`Real`] and instantiated for
//! `f64` (the default used by the experiments and the command line) and
//! `f32`. Tolerances that are quoted in absolute terms are clamped from below
//! by a multiple of the machine epsilon so that single precision runs do not
//! fail on rounding alone.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rustfft::FftNum;

/// Floating point scalar usable by the grid, transport and flow modules.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + FftNum
    + Default
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal into the scalar type.
    #[inline]
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    /// Converts an index or count into the scalar type.
    #[inline]
    fn from_usize_exact(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    /// Lossy conversion to `f64` for reporting and error payloads.
    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Smallest positive value accepted inside a logarithm.
    ///
    /// `1e-300` in double precision, the smallest normal number otherwise.
    #[inline]
    fn positivity_floor() -> Self {
        Self::c(1e-300).max(Self::min_positive_value())
    }

    /// Absolute tolerance `tol`, raised to `scale` machine epsilons when the
    /// scalar type cannot resolve `tol`.
    #[inline]
    fn tolerance(tol: f64, scale: f64) -> Self {
        Self::c(tol).max(Self::epsilon() * Self::c(scale))
    }
}

impl<T> Real for T where
    T: Float
        + FloatConst
        + FromPrimitive
        + ToPrimitive
        + FftNum
        + Default
        + Sum
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Debug
        + Display
        + LowerExp
        + Send
        + Sync
        + 'static
{
}

/// `log(x)` with the argument clamped to [`Real::positivity_floor`].
#[inline]
pub fn floored_ln<S: Real>(x: S) -> S {
    x.max(S::positivity_floor()).ln()
}

/// `x log x` with the convention `0 log 0 = 0`.
#[inline]
pub fn xlogx<S: Real>(x: S) -> S {
    if x > S::zero() {
        x * x.ln()
    } else {
        S::zero()
    }
}

/// Numerically stable `log Σ exp(a_i)`; returns `-inf` for an empty or all
/// `-inf` input.
pub fn log_sum_exp<S: Real>(a: &[S]) -> S {
    let m = a.iter().copied().fold(S::neg_infinity(), S::max);
    if m == S::neg_infinity() {
        return m;
    }
    let s: S = a.iter().map(|&v| (v - m).exp()).sum();
    m + s.ln()
}
