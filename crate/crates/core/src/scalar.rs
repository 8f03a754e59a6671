//! Floating-point scalar abstraction shared by every numerical routine.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real field the library computes in: `f32` or `f64`.
///
/// Tolerance constants are expressed per precision so that structural checks
/// (unit norm, Hermitian symmetry, rank) stay meaningful in single precision.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Smallest relative singular value treated as full rank.
    const RANK_TOL: f64;
    /// Tolerance for structural invariants such as unit norm or idempotence.
    const CHECK_TOL: f64;

    /// Converts an `f64` constant into this precision.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 constant representable in target precision")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    const RANK_TOL: f64 = 1e-10;
    const CHECK_TOL: f64 = 1e-9;
}

impl Real for f32 {
    const RANK_TOL: f64 = 1e-4;
    const CHECK_TOL: f64 = 1e-4;
}

/// Complex scalar over a [`Real`] field.
pub type Cx<T> = Complex<T>;

#[inline]
pub fn cx<T: Real>(re: T, im: T) -> Cx<T> {
    Complex::new(re, im)
}

/// `exp(j * theta)`.
#[inline]
pub fn cis<T: Real>(theta: T) -> Cx<T> {
    Complex::new(theta.cos(), theta.sin())
}
