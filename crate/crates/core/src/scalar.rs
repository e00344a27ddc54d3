use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar the numerical code is generic over: `f32` or `f64`.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Tolerance used when checking that a density sums to one.
    const NORM_TOL: f64;

    /// Converts an `f64` literal. Never fails for finite input.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Scalar")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize is representable in every Scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }

    /// Natural log to bits.
    #[inline]
    fn to_bits_from_nats(self) -> Self {
        self / Self::LN_2()
    }
}

impl Scalar for f32 {
    const NORM_TOL: f64 = 1e-4;
}

impl Scalar for f64 {
    const NORM_TOL: f64 = 1e-9;
}

/// `ln(1 + e^x)` without overflow.
#[inline]
pub fn softplus<S: Scalar>(x: S) -> S {
    if x > S::lit(30.0) {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Derivative of [`softplus`].
#[inline]
pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// Inverse of [`softplus`] for positive arguments.
#[inline]
pub fn softplus_inv<S: Scalar>(y: S) -> S {
    if y > S::lit(30.0) {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}
