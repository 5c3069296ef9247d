//! Floating-point abstraction for the metric kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Real scalar type the similarity kernels are generic over (`f32` or `f64`).
pub trait Scalar: Float + FromPrimitive + Sum + Debug + Display + Send + Sync + 'static {
    fn from_gray(v: u8) -> Self;

    /// Lossless for every value this crate produces (constants, counts, gray levels).
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }
}

impl Scalar for f32 {
    fn from_gray(v: u8) -> Self {
        f32::from(v)
    }
}

impl Scalar for f64 {
    fn from_gray(v: u8) -> Self {
        f64::from(v)
    }
}
