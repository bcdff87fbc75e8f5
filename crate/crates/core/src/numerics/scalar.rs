use ndarray::NdFloat;
use num_traits::{FromPrimitive, ToPrimitive};
use rand::distr::uniform::SampleUniform;

/// Floating-point element type for networks, losses and geometry.
///
/// Implemented for `f32` and `f64`. Checkpoints always store parameters as
/// `f64`, so round-tripping an `f32` network is exact.
pub trait Scalar: NdFloat + FromPrimitive + ToPrimitive + SampleUniform + Default {
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("scalar conversion from f64")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar conversion to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
