//! Numeric abstraction for traffic volumes and money.
//!
//! Routing is purely combinatorial, but everything that carries traffic
//! (matrices, ledgers, cost reports) is generic over [`Scalar`]. `f64` is the
//! working type; [`num_rational::BigRational`] gives exact accounting, which
//! the test-suite uses to check conservation laws without tolerances.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

pub trait Scalar:
    Num + Signed + PartialOrd + Clone + FromPrimitive + ToPrimitive + FromStr + Debug + Display + Send + Sync + 'static
{
    /// Converts a finite `f64`. Panics on NaN or infinity, which callers
    /// rule out at the input boundary.
    fn from_f64_exact(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(|| panic!("value {v} is not representable"))
    }

    fn is_finite_value(&self) -> bool;

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Strictly greater than zero. `Signed::is_positive` is true for `+0.0`.
    fn gt_zero(&self) -> bool {
        *self > Self::zero()
    }

    /// Clamps negative values to zero.
    fn clamp_nonneg(&self) -> Self {
        if self.is_negative() {
            Self::zero()
        } else {
            self.clone()
        }
    }
}

impl Scalar for f64 {
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

impl Scalar for f32 {
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

impl Scalar for BigRational {
    fn is_finite_value(&self) -> bool {
        true
    }

    fn from_f64_exact(v: f64) -> Self {
        BigRational::from_float(v).unwrap_or_else(|| panic!("value {v} is not representable"))
    }
}

/// Sums an iterator of scalars, left to right.
pub fn sum<S: Scalar, I: IntoIterator<Item = S>>(it: I) -> S {
    it.into_iter().fold(S::zero(), |acc, x| acc + x)
}

/// `n` as a scalar.
pub fn from_count<S: Scalar>(n: usize) -> S {
    S::from_usize(n).unwrap_or_else(|| S::from_f64_exact(n as f64))
}

pub(crate) fn cmp<S: Scalar>(a: &S, b: &S) -> std::cmp::Ordering {
    a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal)
}

/// Exact rational from a numerator and denominator.
pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}
