//! Numeric abstraction shared by the dynamics, allocation and simulation code.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point type the simulator can run on.
///
/// Everything that involves exponentials or logarithms of the thermal
/// dynamics needs a real field with transcendental functions, so rationals are
/// not admitted here. `f64` is the reference type; `f32` is supported for
/// memory-bound ensembles.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal. Infallible for the supported float types.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("float literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }

    /// Seconds per hour; device parameters are hourly, the clock is in seconds.
    #[inline]
    fn seconds_per_hour() -> Self {
        Self::lit(3600.0)
    }

    fn half() -> Self {
        Self::lit(0.5)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
