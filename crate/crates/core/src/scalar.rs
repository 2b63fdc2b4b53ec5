//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All math is written against [`Scalar`], which is implemented for `f32`
//! and `f64`. The nalgebra `RealField` bound supplies the linear algebra
//! (Schur, SVD, LU); `num_traits` supplies the primitive conversions used
//! for literals and for I/O, which always goes through `f64`.

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

pub trait Scalar:
    RealField
    + Copy
    + FromPrimitive
    + ToPrimitive
    + Debug
    + Display
    + Default
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Panics only for values the type cannot hold,
    /// which never happens for the constants used in this crate.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    fn is_finite_value(self) -> bool {
        self.as_f64().is_finite()
    }

    fn machine_epsilon() -> Self {
        Self::default_epsilon()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Tolerance that is `requested` for `f64`, loosened to stay meaningful for
/// lower-precision types (never tighter than `floor_factor * eps`).
pub(crate) fn tolerance<T: Scalar>(requested: f64, floor_factor: f64) -> T {
    let eps = T::machine_epsilon().as_f64();
    T::lit(requested.max(eps * floor_factor))
}

/// Condition-number style bound: `requested` for `f64`, capped at
/// `ceiling_factor / eps` for lower-precision types.
pub(crate) fn bound<T: Scalar>(requested: f64, ceiling_factor: f64) -> T {
    let eps = T::machine_epsilon().as_f64();
    T::lit(requested.min(ceiling_factor / eps))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerances_adapt_to_precision() {
        assert_eq!(tolerance::<f64>(1e-9, 10.0), 1e-9);
        assert!(tolerance::<f32>(1e-9, 10.0) > 1e-7);
        assert_eq!(bound::<f64>(1e8, 1e-2), 1e8);
        assert!(bound::<f32>(1e8, 1e-2) < 1e6);
    }
}
