//! Scalar abstraction for QUBO coefficients.
//!
//! Objective and constraint matrices are integer-valued; only the penalty
//! weights can bring in fractions. Building over an exact scalar
//! (`i64`, `Rational64`) keeps every energy identity checkable with `==`,
//! while `f64`/`f32` are what the samplers consume.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::Neg;

use num_traits::{FromPrimitive, Num, NumAssign, ToPrimitive};

/// Coefficient type of a [`QuboInstance`](crate::qubo::QuboInstance).
pub trait Scalar:
    Num
    + NumAssign
    + Neg<Output = Self>
    + Copy
    + PartialOrd
    + Debug
    + Display
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Send
    + Sync
    + 'static
{
    fn from_int(v: i64) -> Self {
        Self::from_i64(v).expect("integer coefficient not representable in scalar type")
    }

    /// Lossy conversion used by the samplers and by JSON export.
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Num
        + NumAssign
        + Neg<Output = T>
        + Copy
        + PartialOrd
        + Debug
        + Display
        + FromPrimitive
        + ToPrimitive
        + Sum
        + Send
        + Sync
        + 'static
{
}
