//! Floating-point scalar abstraction for the spectral core.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};
use rand::Rng;
use rand_distr::StandardNormal;

/// Real scalar the spectral core is generic over: f32 or f64.
///
/// Everything downstream of sampling also needs a standard normal draw,
/// which `rand_distr` only provides for the two float primitives, so the
/// trait carries it as a method instead of a `where` clause on every API.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + Sum
    + Send
    + Sync
    + Debug
    + Display
    + serde::Serialize
    + serde::de::DeserializeOwned
    + 'static
{
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Lossy conversion for literal tolerances and grid constants.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal not representable in scalar type")
    }

    fn from_usize_exact(n: usize) -> Self {
        Self::from_usize(n).expect("usize not representable in scalar type")
    }

    fn from_i64_exact(n: i64) -> Self {
        Self::from_i64(n).expect("i64 not representable in scalar type")
    }
}

impl Scalar for f64 {
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }
}

impl Scalar for f32 {
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }
}
