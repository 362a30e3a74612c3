//! Scalar abstraction shared by every numeric routine in the crate.
//!
//! All core math is written against [`Scalar`] so the same code runs in
//! `f32` or `f64`. The pipeline defaults to `f64`; concrete aliases live at
//! the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};
use serde::{de::DeserializeOwned, Serialize};

/// Floating-point scalar the toolkit is generic over.
///
/// Blanket-implemented for any type with the listed bounds, which in
/// practice means `f32` and `f64`.
pub trait Scalar:
    Float
    + NumAssign
    + FromPrimitive
    + Sum
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant into the scalar type.
    ///
    /// Panics if the value is not representable, which cannot happen for
    /// the finite constants this crate feeds it.
    fn from_f64_lossy(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 constant must convert into the scalar type")
    }

    /// Widens the scalar to `f64` for reporting.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("scalar must widen to f64")
    }
}

impl<T> Scalar for T where
    T: Float
        + NumAssign
        + FromPrimitive
        + Sum
        + Debug
        + Display
        + Serialize
        + DeserializeOwned
        + Send
        + Sync
        + 'static
{
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roundtrip<T: Scalar>(x: f64) -> f64 {
        T::from_f64_lossy(x).to_f64_lossy()
    }

    #[test]
    fn f64_roundtrip_is_exact() {
        for &x in &[0.0, 1.0, -2.5, 39.81, 1e-9, -1.0 / 3.0] {
            assert_eq!(roundtrip::<f64>(x), x);
        }
    }

    #[test]
    fn f32_roundtrip_is_close() {
        for &x in &[0.0, 1.0, -2.5, 0.125] {
            assert_eq!(roundtrip::<f32>(x), x);
        }
        assert!((roundtrip::<f32>(1.0 / 3.0) - 1.0 / 3.0).abs() < 1e-7);
    }
}
