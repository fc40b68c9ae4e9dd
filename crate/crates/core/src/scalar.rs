//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Real floating point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal, panicking only if the target type cannot
    /// represent it at all (never the case for f32/f64).
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Widens a tolerance stated for double precision so it stays meaningful
    /// in lower precision: `max(tol, 64·ε)`.
    #[inline]
    fn tol(tol: f64) -> Self {
        let t = Self::lit(tol);
        let floor = Self::epsilon() * Self::lit(64.0);
        if t > floor {
            t
        } else {
            floor
        }
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Complex number over a [`Real`] scalar.
pub type C<T> = Complex<T>;

#[inline]
pub(crate) fn cr<T: Real>(re: T) -> C<T> {
    Complex::new(re, T::zero())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_floor_tracks_precision() {
        assert_eq!(f64::tol(1e-10), 1e-10);
        assert!(f32::tol(1e-10) > 1e-6);
    }
}
