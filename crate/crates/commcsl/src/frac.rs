//! Exact fractional permissions.
//!
//! Permissions are rationals in (0, 1], stored with arbitrary-precision
//! numerator and denominator so that repeated splitting and merging is
//! lossless: splitting 1 into thirds and re-adding them yields exactly 1.

use std::fmt;
use std::str::FromStr;

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed};
use serde::{Deserialize, Serialize};

/// A permission amount r with 0 < r <= 1.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Frac(BigRational);

impl Frac {
    /// Builds p/q, requiring 0 < p/q <= 1.
    pub fn new(num: i64, den: i64) -> Result<Frac, FracError> {
        if den == 0 {
            return Err(FracError::ZeroDenominator);
        }
        let r = BigRational::new(BigInt::from(num), BigInt::from(den));
        if r.is_positive() && r <= BigRational::one() {
            Ok(Frac(r))
        } else {
            Err(FracError::OutOfRange(r.to_string()))
        }
    }

    pub fn one() -> Frac {
        Frac(BigRational::one())
    }

    pub fn half() -> Frac {
        Frac::new(1, 2).unwrap()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }

    /// Permission addition: defined only while the sum stays at or below 1.
    pub fn checked_add(&self, other: &Frac) -> Option<Frac> {
        let sum = &self.0 + &other.0;
        if sum <= BigRational::one() {
            Some(Frac(sum))
        } else {
            None
        }
    }

    /// Permission subtraction: defined only while the difference stays positive.
    pub fn checked_sub(&self, other: &Frac) -> Option<Frac> {
        let d = &self.0 - &other.0;
        if d.is_positive() {
            Some(Frac(d))
        } else {
            None
        }
    }

    /// The midpoint between this fraction and 1 — a canonical strictly
    /// larger permission when one is needed and `self` is below 1.
    pub fn midpoint_to_one(&self) -> Frac {
        Frac((&self.0 + BigRational::one()) / BigRational::from(BigInt::from(2)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FracError {
    #[error("fraction has zero denominator")]
    ZeroDenominator,
    #[error("fraction {0} is outside (0, 1]")]
    OutOfRange(String),
    #[error("malformed fraction literal {0:?} (expected N or N/M)")]
    Malformed(String),
}

impl fmt::Display for Frac {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_one() {
            write!(f, "1")
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl FromStr for Frac {
    type Err = FracError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = || FracError::Malformed(s.to_string());
        match s.split_once('/') {
            None => {
                let n: i64 = s.trim().parse().map_err(|_| malformed())?;
                Frac::new(n, 1)
            }
            Some((p, q)) => {
                let p: i64 = p.trim().parse().map_err(|_| malformed())?;
                let q: i64 = q.trim().parse().map_err(|_| malformed())?;
                Frac::new(p, q)
            }
        }
    }
}

impl Serialize for Frac {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Frac {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Sums a list of fractions, failing if the total exceeds 1.
pub fn sum_fractions<'a, I: IntoIterator<Item = &'a Frac>>(parts: I) -> Option<Frac> {
    let mut total: Option<Frac> = None;
    for p in parts {
        total = Some(match total {
            None => p.clone(),
            Some(t) => t.checked_add(p)?,
        });
    }
    total
}
