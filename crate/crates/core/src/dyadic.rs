//! Dyadic rationals `n / 2^k`, the exact form of every network probability.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;

/// Non-negative dyadic rational `num / 2^exp`, kept in lowest terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Dyadic {
    num: u128,
    exp: u32,
}

const MAX_EXP: u32 = 120;

impl Dyadic {
    pub const ZERO: Dyadic = Dyadic { num: 0, exp: 0 };
    pub const ONE: Dyadic = Dyadic { num: 1, exp: 0 };

    pub fn new(num: u64, exp: u32) -> Self {
        Self::normalized(num as u128, exp)
    }

    /// `2^-exp`.
    pub fn pow2_inv(exp: u32) -> Self {
        Self::normalized(1, exp)
    }

    fn normalized(mut num: u128, mut exp: u32) -> Self {
        assert!(exp <= MAX_EXP, "dyadic exponent {exp} out of range");
        if num == 0 {
            return Self::ZERO;
        }
        let tz = num.trailing_zeros().min(exp);
        num >>= tz;
        exp -= tz;
        Dyadic { num, exp }
    }

    pub fn numerator(&self) -> u128 {
        self.num
    }

    pub fn log2_denominator(&self) -> u32 {
        self.exp
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }

    fn aligned(self, other: Self) -> (u128, u128, u32) {
        let exp = self.exp.max(other.exp);
        let a = self.num.checked_shl(exp - self.exp).expect("dyadic overflow");
        let b = other.num.checked_shl(exp - other.exp).expect("dyadic overflow");
        (a, b, exp)
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / 2f64.powi(self.exp as i32)
    }

    pub fn to_rational(&self) -> BigRational {
        BigRational::new(BigInt::from(self.num), BigInt::from(1u8) << self.exp as usize)
    }

    /// Difference, or `None` when it would be negative.
    pub fn checked_sub(self, other: Self) -> Option<Self> {
        let (a, b, exp) = self.aligned(other);
        a.checked_sub(b).map(|d| Self::normalized(d, exp))
    }
}

impl Default for Dyadic {
    fn default() -> Self {
        Self::ZERO
    }
}

impl Add for Dyadic {
    type Output = Dyadic;
    fn add(self, rhs: Self) -> Self {
        let (a, b, exp) = self.aligned(rhs);
        Self::normalized(a.checked_add(b).expect("dyadic overflow"), exp)
    }
}

impl AddAssign for Dyadic {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl Sub for Dyadic {
    type Output = Dyadic;
    fn sub(self, rhs: Self) -> Self {
        self.checked_sub(rhs).expect("negative dyadic")
    }
}

#[allow(clippy::suspicious_arithmetic_impl)]
impl Mul for Dyadic {
    type Output = Dyadic;
    fn mul(self, rhs: Self) -> Self {
        let num = self.num.checked_mul(rhs.num).expect("dyadic overflow");
        Self::normalized(num, self.exp + rhs.exp)
    }
}

impl Sum for Dyadic {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::ZERO, |acc, x| acc + x)
    }
}

impl<'a> Sum<&'a Dyadic> for Dyadic {
    fn sum<I: Iterator<Item = &'a Self>>(iter: I) -> Self {
        iter.fold(Self::ZERO, |acc, x| acc + *x)
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b, _) = self.aligned(*other);
        a.cmp(&b)
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Dyadic {
    /// `p/q` with `q` a power of two; integers print without a denominator.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exp == 0 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, 1u128 << self.exp)
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("not a dyadic fraction: {0:?}")]
pub struct ParseDyadicError(String);

impl FromStr for Dyadic {
    type Err = ParseDyadicError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseDyadicError(s.to_string());
        let (num, den) = match s.split_once('/') {
            Some((n, d)) => (n.trim(), d.trim()),
            None => (s.trim(), "1"),
        };
        let num: u128 = num.parse().map_err(|_| err())?;
        let den: u128 = den.parse().map_err(|_| err())?;
        if den == 0 || !den.is_power_of_two() {
            return Err(err());
        }
        let exp = den.trailing_zeros();
        if exp > MAX_EXP {
            return Err(err());
        }
        Ok(Self::normalized(num, exp))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_and_prints() {
        assert_eq!(Dyadic::new(4, 3).to_string(), "1/2");
        assert_eq!(Dyadic::new(8, 3).to_string(), "1");
        assert_eq!(Dyadic::ZERO.to_string(), "0");
        assert_eq!(Dyadic::new(7, 6).to_string(), "7/64");
    }

    #[test]
    fn arithmetic() {
        let eighth = Dyadic::pow2_inv(3);
        let total: Dyadic = std::iter::repeat_n(eighth, 8).sum();
        assert_eq!(total, Dyadic::ONE);
        assert_eq!(Dyadic::new(3, 2) - Dyadic::new(1, 1), Dyadic::new(1, 2));
        assert_eq!(Dyadic::new(1, 1) * Dyadic::new(1, 2), eighth);
        assert!(Dyadic::new(1, 2) < Dyadic::new(3, 3));
        assert_eq!(Dyadic::new(1, 2).checked_sub(Dyadic::new(1, 1)), None);
    }

    #[test]
    fn parse_round_trip() {
        for s in ["0", "1", "3/8", "1/1024"] {
            assert_eq!(s.parse::<Dyadic>().unwrap().to_string(), s);
        }
        assert!("1/3".parse::<Dyadic>().is_err());
        assert_eq!(Dyadic::new(3, 3).to_rational(), BigRational::new(3.into(), 8.into()));
    }
}
