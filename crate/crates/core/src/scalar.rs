//! Scalar abstraction for the numeric kernels.
//!
//! Expressions store their literals as `f64` so that the text form is exact,
//! but evaluation, Jacobians, rank tests and Newton solves are generic over any
//! [`Scalar`]. The toolkit itself runs in `f64` (see [`crate::Real`]).

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{Float, FromPrimitive};

/// Floating point type usable by the numeric kernels: `f32` or `f64`.
pub trait Scalar: Float + FromPrimitive + RealField + Copy + Debug + Display + Send + Sync + 'static {
    /// Lossy conversion from a literal.
    fn lit(value: f64) -> Self {
        <Self as FromPrimitive>::from_f64(value).expect("literal representable in scalar type")
    }

    /// Widening conversion used for reports.
    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
