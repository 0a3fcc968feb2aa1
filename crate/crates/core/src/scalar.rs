//! Floating-point abstraction for the generic numeric kernels.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Scalar type the numeric kernels (linear algebra, simplex, DAE
/// integration) are written against. Implemented for `f32` and `f64`.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + LowerExp + Default + 'static
{
    /// Converts an `f64` constant into this scalar type.
    fn c(value: f64) -> Self {
        Self::from_f64(value).expect("constant must be representable")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Infinity norm of a vector; zero for an empty slice.
pub fn norm_inf<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_conversion_roundtrips() {
        assert_eq!(f64::c(1.5), 1.5);
        assert_eq!(f32::c(0.25), 0.25f32);
    }

    #[test]
    fn norm_inf_picks_largest_magnitude() {
        assert_eq!(norm_inf(&[1.0, -3.0, 2.0]), 3.0);
        assert_eq!(norm_inf::<f64>(&[]), 0.0);
    }
}
