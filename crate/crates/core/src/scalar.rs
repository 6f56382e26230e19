//! Scalar abstraction shared by the plain and the taped simulator paths.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Real field elements the simulator can be evaluated over.
///
/// Plain floats implement it directly; [`crate::tape::Var`] implements it by
/// recording every operation on a tape. Constants are created through
/// [`Real::lift`] so that taped values can hand out constants belonging to
/// the same tape.
pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// A constant in the same context as `self`.
    fn lift(self, c: f64) -> Self;
    fn value(&self) -> f64;
    fn exp(self) -> Self;
    fn tanh(self) -> Self;

    fn zero_like(self) -> Self {
        self.lift(0.0)
    }

    fn one_like(self) -> Self {
        self.lift(1.0)
    }

    fn square(self) -> Self {
        self * self
    }
}

macro_rules! impl_real_float {
    ($t:ty) => {
        impl Real for $t {
            #[inline]
            fn lift(self, c: f64) -> Self {
                c as $t
            }
            #[inline]
            fn value(&self) -> f64 {
                *self as f64
            }
            #[inline]
            fn exp(self) -> Self {
                <$t>::exp(self)
            }
            #[inline]
            fn tanh(self) -> Self {
                <$t>::tanh(self)
            }
        }
    };
}

impl_real_float!(f32);
impl_real_float!(f64);
