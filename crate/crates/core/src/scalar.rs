//! Scalar abstractions shared by the distance, assignment and sampling code.
//!
//! Everything numeric in the crate is generic over [`Real`] (implemented for
//! `f32` and `f64`). The assignment solvers only need the weaker [`Cost`]
//! bound, which integer types also satisfy so that exact integer instances
//! can be solved without rounding.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{Add, AddAssign, MulAssign, Sub, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive, Zero};

/// Entry type accepted by the linear assignment solvers.
pub trait Cost: Copy + PartialOrd + Add<Output = Self> + Sub<Output = Self> + Zero + Debug + Send + Sync {
    /// Value used for edges that must never be selected.
    fn forbidden() -> Self;
    /// Initial value of the shortest-path labels; strictly above `forbidden`
    /// for integer types, equal to it for floats.
    fn unbounded() -> Self;
    /// True for finite, nonnegative entries small enough that dual updates
    /// cannot overflow on an `n`-row problem.
    fn admissible(self, n: usize) -> bool;
    /// Slack under which a reduced cost is treated as zero.
    fn tie_tolerance(scale: Self, n: usize) -> Self;
    fn as_f64(self) -> f64;
}

macro_rules! float_cost {
    ($t:ty) => {
        impl Cost for $t {
            fn forbidden() -> Self {
                <$t>::INFINITY
            }
            fn unbounded() -> Self {
                <$t>::INFINITY
            }
            fn admissible(self, _n: usize) -> bool {
                self.is_finite() && self >= 0.0
            }
            fn tie_tolerance(scale: Self, n: usize) -> Self {
                scale.max(1.0) * (n.max(1) as $t) * 64.0 * <$t>::EPSILON
            }
            fn as_f64(self) -> f64 {
                self as f64
            }
        }
    };
}

macro_rules! int_cost {
    ($t:ty) => {
        impl Cost for $t {
            fn forbidden() -> Self {
                <$t>::MAX / 4
            }
            fn unbounded() -> Self {
                <$t>::MAX / 2
            }
            fn admissible(self, n: usize) -> bool {
                let n = n.max(1) as $t;
                self >= 0 && self <= <$t>::MAX / (16 * n * n)
            }
            fn tie_tolerance(_scale: Self, _n: usize) -> Self {
                0
            }
            fn as_f64(self) -> f64 {
                self as f64
            }
        }
    };
}

float_cost!(f32);
float_cost!(f64);
int_cost!(i32);
int_cost!(i64);

/// Floating point scalar used by the samplers and simulators.
pub trait Real:
    Float
    + Cost
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + Default
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossless widening used for bitwise identity checks and output.
    fn widen(self) -> f64;
}

impl Real for f32 {
    fn widen(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn widen(self) -> f64 {
        self
    }
}

/// Converts an `f64` constant into the working scalar type.
#[inline]
pub fn cast<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 converts to every float type")
}
