//! Scalar abstraction: everything numeric in this crate is generic over a
//! floating-point type, with `f64` aliases exported from the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar the toolkit is generic over (`f32` or `f64`).
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Sum
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

/// Convert an `f64` literal or count into the working scalar type.
#[inline]
pub fn fp<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

/// Convert a job or server count into the working scalar type.
#[inline]
pub fn count<T: Real>(n: usize) -> T {
    fp(n as f64)
}
