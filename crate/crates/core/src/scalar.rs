use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Element type of a [`Tensor`](crate::tensor::Tensor).
///
/// Training runs in `f32`; gradient checks run in `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Gauss error function.
    fn erf(self) -> Self;

    /// Lossless-enough conversion helper used by kernels that mix constants in.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    #[inline]
    fn erf(self) -> Self {
        libm::erff(self)
    }
}

impl Scalar for f64 {
    #[inline]
    fn erf(self) -> Self {
        libm::erf(self)
    }
}
