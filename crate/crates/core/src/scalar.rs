//! Scalar abstraction: all analytic formulas, solvers and the simulator are
//! generic over the floating-point type through this trait.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};
use rand::Rng;

/// Floating-point scalar the toolkit computes with.
///
/// Extends `num_traits::Float` with the handful of extras the crate needs:
/// literal conversion from `f64` and the two random draws the simulator and
/// the randomized policies rely on. Sampling goes through inverse CDFs so a
/// single generator draw produces a single variate, which keeps random
/// streams stable when code is reordered.
pub trait Scalar:
    Float + NumAssign + FromPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal; panics only if the value is not
    /// representable, which cannot happen for the constants used here.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("literal not representable in scalar type")
    }

    /// Uniform draw from `[0, 1)`.
    fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Exponential draw with the given rate, via inverse CDF.
    fn sample_exp<R: Rng + ?Sized>(rng: &mut R, rate: Self) -> Self {
        // u in [0,1) so 1-u in (0,1] and ln(1-u) <= 0 is finite.
        -(Self::one() - Self::sample_unit(rng)).ln() / rate
    }
}

impl Scalar for f64 {
    fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random::<f64>()
    }
}

impl Scalar for f32 {
    fn sample_unit<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.random::<f32>()
    }
}
