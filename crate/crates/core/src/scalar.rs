//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::Serialize;

/// Floating point type the toolkit computes in: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Serialize + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub fn lit<S: Scalar>(x: f64) -> S {
    S::from_f64(x).expect("f64 literal representable")
}

#[inline]
pub fn to_f64<S: Scalar>(x: S) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

#[inline]
pub(crate) fn from_usize<S: Scalar>(n: usize) -> S {
    S::from_usize(n).expect("count representable")
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`.
///
/// Prefix tables store running sums in this form so that box sums obtained
/// by inclusion-exclusion of large prefixes keep close to twice the working
/// precision.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TwoFloat<S> {
    pub hi: S,
    pub lo: S,
}

#[inline]
fn two_sum<S: Scalar>(a: S, b: S) -> (S, S) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn quick_two_sum<S: Scalar>(a: S, b: S) -> (S, S) {
    let s = a + b;
    (s, b - (s - a))
}

impl<S: Scalar> TwoFloat<S> {
    #[inline]
    pub fn new(x: S) -> Self {
        Self { hi: x, lo: S::zero() }
    }

    #[inline]
    pub fn add(self, other: Self) -> Self {
        let (s, e) = two_sum(self.hi, other.hi);
        let e = e + self.lo + other.lo;
        let (hi, lo) = quick_two_sum(s, e);
        Self { hi, lo }
    }

    #[inline]
    pub fn neg(self) -> Self {
        Self { hi: -self.hi, lo: -self.lo }
    }

    #[inline]
    pub fn sub(self, other: Self) -> Self {
        self.add(other.neg())
    }

    #[inline]
    pub fn value(self) -> S {
        self.hi + self.lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_float_recovers_cancelled_bits() {
        let big = TwoFloat::new(1.0e16_f64);
        let sum = big.add(TwoFloat::new(1.0)).add(TwoFloat::new(1.0));
        let diff = sum.sub(big);
        assert_eq!(diff.value(), 2.0);
    }

    #[test]
    fn literal_roundtrip_f32() {
        let x: f32 = lit(0.25);
        assert_eq!(x, 0.25);
        assert_eq!(to_f64(x), 0.25);
    }
}
