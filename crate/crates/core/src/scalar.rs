//! Scalar abstraction shared by the numerical modules.
//!
//! The spline machinery and metric code is written against [`Real`] so it can
//! be instantiated for `f32` as well as `f64`. The sampler itself runs on
//! `f64`; see the aliases at the crate root.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar usable by the dense linear algebra in this crate.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Default {
    /// Relative tolerance used for rank decisions and degeneracy checks.
    fn rank_tolerance() -> Self {
        let eps = Self::default_epsilon() * lit::<Self>(1e3);
        let floor = lit::<Self>(1e-12);
        if eps > floor {
            eps
        } else {
            floor
        }
    }
}

impl<T> Real for T where T: RealField + Copy + FromPrimitive + ToPrimitive + Default {}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

/// Converts `T` back into `f64`.
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().expect("scalar convertible to f64")
}
