//! Loss-free rational numbers for slot-level measurement and the oracle.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};
use serde::{Serialize, Serializer};

/// An arbitrary-precision rational, always stored in lowest terms with a
/// positive denominator.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct ExactRatio(BigRational);

impl ExactRatio {
    pub fn new(numer: i64, denom: i64) -> Self {
        assert!(denom != 0, "zero denominator");
        ExactRatio(BigRational::new(BigInt::from(numer), BigInt::from(denom)))
    }

    pub fn from_integer(n: i64) -> Self {
        ExactRatio(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn zero() -> Self {
        ExactRatio(BigRational::zero())
    }

    pub fn one() -> Self {
        ExactRatio(BigRational::one())
    }

    /// Exact value of a finite float. Every finite `f64` is a dyadic rational,
    /// so no rounding happens here.
    pub fn from_f64(x: f64) -> Option<Self> {
        BigRational::from_float(x).map(ExactRatio)
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn floor(&self) -> Self {
        ExactRatio(self.0.floor())
    }

    pub fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    pub fn recip(&self) -> Self {
        ExactRatio(self.0.recip())
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// Integer value, if this ratio is an integer that fits in `u64`.
    pub fn to_u64(&self) -> Option<u64> {
        if self.0.is_integer() {
            self.0.numer().to_u64()
        } else {
            None
        }
    }
}

impl From<u64> for ExactRatio {
    fn from(n: u64) -> Self {
        ExactRatio(BigRational::from_integer(BigInt::from(n)))
    }
}

impl From<usize> for ExactRatio {
    fn from(n: usize) -> Self {
        ExactRatio(BigRational::from_integer(BigInt::from(n)))
    }
}

impl fmt::Display for ExactRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl Serialize for ExactRatio {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident) => {
        impl $trait for ExactRatio {
            type Output = ExactRatio;
            fn $method(self, rhs: ExactRatio) -> ExactRatio {
                ExactRatio(self.0.$method(rhs.0))
            }
        }
        impl<'a> $trait<&'a ExactRatio> for &'a ExactRatio {
            type Output = ExactRatio;
            fn $method(self, rhs: &'a ExactRatio) -> ExactRatio {
                ExactRatio((&self.0).$method(&rhs.0))
            }
        }
    };
}

forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);
forward_binop!(Div, div);

impl Neg for ExactRatio {
    type Output = ExactRatio;
    fn neg(self) -> ExactRatio {
        ExactRatio(-self.0)
    }
}
