//! Scalar abstraction for the numerical kernels.
//!
//! Everything in this crate is written against [`Scalar`], a thin alias over
//! the `num-traits` float stack, so the same code runs at `f32` and `f64`.
//! The stated accuracy targets (1e-10 .. 1e-13) assume `f64`; at `f32` the
//! algorithms still run but tolerances must be scaled to the wider epsilon.

use std::fmt::{Debug, Display};
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar usable by every kernel in this crate.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Convert an `f64` constant into `Self`.
    ///
    /// Constants appearing in the algorithms (quadrature tolerances, decay
    /// thresholds, closed-form rational factors) are written as `f64`
    /// literals and converted on use.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 constant must convert")
    }

    /// Convert a `usize` index into `Self`.
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).unwrap_or_else(|| Self::of(n as f64))
    }

    /// Round-trip into `f64` (lossless for `f32`/`f64`).
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar must convert to f64")
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions_round_trip() {
        assert_eq!(<f64 as Scalar>::of(1.5), 1.5);
        assert_eq!(<f32 as Scalar>::of(1.5), 1.5f32);
        assert_eq!(<f64 as Scalar>::of_usize(7), 7.0);
        assert_eq!(2.25f64.to_f64_lossy(), 2.25);
    }
}
