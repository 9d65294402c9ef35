//! Integer money and time units shared by every module.
//!
//! All ETH amounts are carried as whole gwei. Nothing in the crate stores a
//! balance as a float.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub, SubAssign};

use serde::{Deserialize, Serialize};

pub const GWEI_PER_ETH: u64 = 1_000_000_000;

/// Stake required to launch one validator.
pub const DEPOSIT_SIZE: Gwei = Gwei(32 * GWEI_PER_ETH);

pub const DEFAULT_EPOCHS_PER_DAY: u64 = 225;
pub const SECONDS_PER_DAY: u64 = 86_400;
pub const DAYS_PER_YEAR: u64 = 365;

/// An amount of ether in gwei (10⁻⁹ ETH).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Gwei(pub u64);

impl Gwei {
    pub const ZERO: Gwei = Gwei(0);

    pub const fn from_eth(eth: u64) -> Self {
        Gwei(eth * GWEI_PER_ETH)
    }

    /// Converts a decimal ETH amount, rounding to the nearest gwei.
    /// Returns `None` for negative, non-finite or overflowing inputs.
    pub fn from_eth_f64(eth: f64) -> Option<Self> {
        if !eth.is_finite() || eth < 0.0 {
            return None;
        }
        let gwei = (eth * GWEI_PER_ETH as f64).round();
        if gwei > u64::MAX as f64 {
            return None;
        }
        Some(Gwei(gwei as u64))
    }

    pub const fn get(self) -> u64 {
        self.0
    }

    pub fn as_eth_f64(self) -> f64 {
        self.0 as f64 / GWEI_PER_ETH as f64
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn checked_sub(self, rhs: Gwei) -> Option<Gwei> {
        self.0.checked_sub(rhs.0).map(Gwei)
    }

    pub fn saturating_sub(self, rhs: Gwei) -> Gwei {
        Gwei(self.0.saturating_sub(rhs.0))
    }

    /// `floor(self × num / den)` with a 128-bit intermediate.
    pub fn mul_div(self, num: u64, den: u64) -> Gwei {
        assert!(den != 0, "mul_div by zero");
        Gwei(mul_div_floor(self.0, num, den))
    }
}

impl fmt::Display for Gwei {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let whole = self.0 / GWEI_PER_ETH;
        let frac = self.0 % GWEI_PER_ETH;
        if frac == 0 {
            write!(f, "{whole} ETH")
        } else {
            let digits = format!("{frac:09}");
            write!(f, "{whole}.{} ETH", digits.trim_end_matches('0'))
        }
    }
}

impl Add for Gwei {
    type Output = Gwei;
    fn add(self, rhs: Gwei) -> Gwei {
        Gwei(self.0.checked_add(rhs.0).expect("gwei overflow"))
    }
}

impl AddAssign for Gwei {
    fn add_assign(&mut self, rhs: Gwei) {
        *self = *self + rhs;
    }
}

impl Sub for Gwei {
    type Output = Gwei;
    fn sub(self, rhs: Gwei) -> Gwei {
        Gwei(self.0.checked_sub(rhs.0).expect("gwei underflow"))
    }
}

impl SubAssign for Gwei {
    fn sub_assign(&mut self, rhs: Gwei) {
        *self = *self - rhs;
    }
}

impl Sum for Gwei {
    fn sum<I: Iterator<Item = Gwei>>(iter: I) -> Gwei {
        iter.fold(Gwei::ZERO, Add::add)
    }
}

impl<'a> Sum<&'a Gwei> for Gwei {
    fn sum<I: Iterator<Item = &'a Gwei>>(iter: I) -> Gwei {
        iter.copied().sum()
    }
}

/// `floor(a × b / c)` computed in 128 bits. Panics if the result does not fit in u64.
pub fn mul_div_floor(a: u64, b: u64, c: u64) -> u64 {
    let q = (a as u128 * b as u128) / c as u128;
    u64::try_from(q).expect("mul_div result overflows u64")
}

/// Beacon-chain epoch index.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Epoch(pub u64);

impl Epoch {
    pub fn next(self) -> Epoch {
        Epoch(self.0 + 1)
    }
}

impl fmt::Display for Epoch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValidatorId(pub u64);

impl fmt::Display for ValidatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// Opaque name of a staker, operator, pool or treasury.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EntityId(pub String);

impl EntityId {
    pub fn new(name: impl Into<String>) -> Self {
        EntityId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for EntityId {
    fn from(s: &str) -> Self {
        EntityId(s.to_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deposit_is_32_eth() {
        assert_eq!(DEPOSIT_SIZE.get(), 32_000_000_000);
        assert_eq!(DEPOSIT_SIZE, Gwei::from_eth(32));
    }

    #[test]
    fn eth_float_conversion_rounds() {
        assert_eq!(Gwei::from_eth_f64(0.05), Some(Gwei(50_000_000)));
        assert_eq!(Gwei::from_eth_f64(33.216), Some(Gwei(33_216_000_000)));
        assert_eq!(Gwei::from_eth_f64(-1.0), None);
        assert_eq!(Gwei::from_eth_f64(f64::NAN), None);
    }

    #[test]
    fn display() {
        assert_eq!(Gwei::from_eth(32).to_string(), "32 ETH");
        assert_eq!(Gwei(33_216_000_000).to_string(), "33.216 ETH");
        assert_eq!(Gwei(1).to_string(), "0.000000001 ETH");
    }

    #[test]
    fn mul_div_uses_wide_intermediate() {
        assert_eq!(mul_div_floor(u64::MAX, u64::MAX, u64::MAX), u64::MAX);
        assert_eq!(mul_div_floor(11, 100, 110), 10);
    }
}
