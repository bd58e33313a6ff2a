//! Floating-point scalar abstraction shared by the tensor, network and
//! training code. Implemented for `f32` (training) and `f64` (gradient
//! checks and bit-exact reproducibility runs).

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, NumCast, ToPrimitive};

/// f32 or f64
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Bits of precision, 32 or 64.
    const BITS: u32;

    /// Converts an `f64` literal or computed value into this scalar.
    #[inline]
    fn of(v: f64) -> Self {
        <Self as NumCast>::from(v).expect("f64 is representable in every Scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {
    const BITS: u32 = 32;
}

impl Scalar for f64 {
    const BITS: u32 = 64;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half<T: Scalar>() -> T {
        T::of(1.0) / T::of(2.0)
    }

    #[test]
    fn round_trips_through_f64() {
        assert_eq!(half::<f32>(), 0.5f32);
        assert_eq!(half::<f64>().as_f64(), 0.5);
        assert_eq!(<f32 as Scalar>::BITS, 32);
        assert_eq!(<f64 as Scalar>::BITS, 64);
    }
}
