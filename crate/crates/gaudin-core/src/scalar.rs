//! Scalar abstraction: the whole library is generic over the real type.

use std::fmt::{Debug, Display, LowerExp};

/// Real scalar the library is generic over (`f32` or `f64`).
///
/// `nalgebra::RealField` supplies the arithmetic and elementary functions;
/// `NumCast` lets tolerance defaults, written once as `f64` literals, be
/// converted into `T`.
pub trait Scalar:
    nalgebra::RealField + num_traits::NumCast + Copy + Default + Display + Debug + LowerExp
{
    /// Converts an `f64` constant into `T`.
    ///
    /// Panics on unrepresentable input, which cannot happen for the finite
    /// literals this library feeds it.
    fn cast(x: f64) -> Self {
        num_traits::NumCast::from(x).expect("finite f64 constant must convert")
    }

    /// Converts a count into `T` (exact for every size this library handles).
    fn from_count(n: usize) -> Self {
        Self::cast(n as f64)
    }

    /// Converts into `f64` for reporting and serialization.
    fn to_f64(self) -> f64 {
        num_traits::NumCast::from(self).expect("real scalar must convert to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
