//! Scalar abstraction shared by the algebraic modules.

use std::fmt::Debug;

use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

/// Field-like scalar: `f32`, `f64` and exact rationals all qualify.
pub trait Scalar:
    Num + Signed + Copy + PartialOrd + Debug + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    fn from_int(v: i64) -> Self {
        Self::from_i64(v).expect("integer not representable in scalar type")
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Num
        + Signed
        + Copy
        + PartialOrd
        + Debug
        + FromPrimitive
        + ToPrimitive
        + Send
        + Sync
        + 'static
{
}
