//! Scalar abstraction over the floating-point types the numeric core runs on.
//!
//! Everything downstream (tape, model, trainer, metrics) is generic over
//! [`Scalar`]. `f64` is what the CLI and the tight oracle tolerances assume;
//! `f32` builds are supported for lighter-weight scoring.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, NumAssign};
use rand::Rng;

/// Floating-point scalar type of the numeric core.
pub trait Scalar:
    Float + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;

    /// One standard-normal draw (Box-Muller over the rng's unit doubles).
    ///
    /// Hand-rolled rather than pulled from a distributions crate so the
    /// stream stays fixed under dependency bumps; seeded runs must be
    /// bit-reproducible.
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]: keeps ln finite
        let u2: f64 = rng.gen();
        let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        Self::from_f64(z)
    }

    /// One uniform draw in `[lo, hi)`.
    fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: Self, hi: Self) -> Self {
        lo + (hi - lo) * Self::from_f64(rng.gen::<f64>())
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}
