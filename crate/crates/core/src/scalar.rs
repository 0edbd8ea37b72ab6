//! Scalar abstractions.
//!
//! The mechanisms only need field arithmetic, so they are written against
//! [`Scalar`], which is implemented for `f32`, `f64` and the exact
//! [`BigRational`]. Anything that needs `ln`, `exp` or `sqrt` (densities,
//! sampling, eigenvalues, closed-form radii) is written against [`Real`].

use std::fmt::{Debug, Display};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, Num, Signed, ToPrimitive, Zero};

/// Field-like number type the round semantics are generic over.
pub trait Scalar:
    Clone + Debug + Display + PartialOrd + Num + Signed + Send + Sync + 'static
{
    /// Converts an `f64`. Exact for rational scalars, rounding for `f32`.
    fn lift(value: f64) -> Self;

    /// Nearest `f64`. Values too small to represent become `0.0`.
    fn as_f64(&self) -> f64;

    fn from_count(value: usize) -> Self {
        // small counts only: degrees, client numbers
        (0..value).fold(Self::zero(), |acc, _| acc + Self::one())
    }

    /// `self^exp` by repeated squaring.
    fn powu(&self, mut exp: u32) -> Self {
        let mut base = self.clone();
        let mut acc = Self::one();
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc * base.clone();
            }
            base = base.clone() * base;
            exp >>= 1;
        }
        acc
    }
}

/// Floating point scalars: `f32` or `f64`.
pub trait Real: Scalar + Float + Copy {
    fn lit(value: f64) -> Self {
        <Self as Scalar>::lift(value)
    }
}

macro_rules! impl_float_scalar {
    ($f:ty) => {
        impl Scalar for $f {
            fn lift(value: f64) -> Self {
                value as $f
            }

            fn as_f64(&self) -> f64 {
                *self as f64
            }

            fn from_count(value: usize) -> Self {
                value as $f
            }

            fn powu(&self, exp: u32) -> Self {
                self.powi(exp as i32)
            }
        }

        impl Real for $f {}
    };
}

impl_float_scalar!(f32);
impl_float_scalar!(f64);

impl Scalar for BigRational {
    /// Panics on NaN or infinite input.
    fn lift(value: f64) -> Self {
        BigRational::from_float(value).expect("finite f64 required for exact conversion")
    }

    fn as_f64(&self) -> f64 {
        if self.is_zero() {
            return 0.0;
        }
        if let Some(v) = ToPrimitive::to_f64(self) {
            return v;
        }
        // numerator and denominator beyond f64 range: scale by bit length
        let num = self.numer();
        let den = self.denom();
        let shift = num.bits() as i64 - den.bits() as i64;
        let scaled = if shift >= 0 {
            BigRational::new(num.clone(), den.clone() << (shift as u64))
        } else {
            BigRational::new(num.clone() << ((-shift) as u64), den.clone())
        };
        let mantissa = ToPrimitive::to_f64(&scaled).unwrap_or(0.0);
        mantissa * 2f64.powi(shift.clamp(i32::MIN as i64, i32::MAX as i64) as i32)
    }

    fn from_count(value: usize) -> Self {
        BigRational::from_integer(BigInt::from(value))
    }
}

/// Exact ratio `num/den` for rational scalars.
pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

/// Sum in ascending index order.
pub fn ordered_sum<S: Scalar>(values: &[S]) -> S {
    values
        .iter()
        .fold(S::zero(), |acc, v| acc + v.clone())
}

/// Maximum absolute elementwise difference, as `f64`.
pub fn sup_gap<S: Scalar>(a: &[S], b: &[S]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x.clone() - y.clone()).abs().as_f64())
        .fold(0.0, f64::max)
}
