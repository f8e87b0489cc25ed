//! Scalar abstraction for the numeric core.
//!
//! Everything numeric in this crate is generic over [`Real`]; `f64` is the
//! default type parameter on the public types and what the CLI uses.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant into `Self`.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("constant not representable in scalar type")
    }

    /// Converts a `usize` into `Self`.
    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("integer not representable in scalar type")
    }

    /// Rounds half up to the nearest integer (as a float): 2.5 -> 3.0.
    fn round_half_up(self) -> Self {
        (self + Self::of(0.5)).floor()
    }
}

impl Real for f32 {}
impl Real for f64 {}
