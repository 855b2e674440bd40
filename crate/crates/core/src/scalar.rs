//! Floating-point abstraction shared by every numerical module.
//!
//! All of the grid, LP and robustness code is written against [`Scalar`]
//! so it can run in `f32` for quick experiments or `f64` (the default
//! aliases at the crate root) for anything that needs the stated
//! tolerances.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar type used by the solvers.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts an `f64` literal into the scalar type.
    ///
    /// Panics only if the target type cannot represent finite `f64`
    /// values at all, which is never the case for `f32`/`f64`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("scalar conversion")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar conversion")
    }

    /// A tolerance of at least `base`, widened for low-precision types.
    ///
    /// `f64` gets `base` unchanged for every tolerance used in this crate;
    /// `f32` gets a floor of a few hundred ulps.
    #[inline]
    fn tol(base: f64) -> Self {
        let floor = Self::epsilon() * Self::lit(256.0);
        Self::lit(base).max(floor)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub(crate) fn sum<T: Scalar>(xs: &[T]) -> T {
    xs.iter().copied().sum()
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub(crate) fn max_abs<T: Scalar>(xs: &[T]) -> T {
    xs.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerances_are_widened_for_f32() {
        assert_eq!(<f64 as Scalar>::tol(1e-9), 1e-9);
        assert!(<f32 as Scalar>::tol(1e-9) > 1e-6);
    }
}
