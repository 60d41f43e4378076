//! Exact rational frequencies `k / period`.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{MfrsError, Result};

/// A frequency `num / den` in cycles per step, kept as the harmonic index and
/// the integer period it was derived from (`2/24` stays `2/24`). Equality and
/// ordering compare the rational value, so `2/24 == 1/12`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Frequency {
    pub num: u64,
    pub den: u64,
}

impl Frequency {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if num < 1 {
            return Err(MfrsError::validation(format!(
                "frequency numerator must be >= 1, got {num}"
            )));
        }
        if den < 2 {
            return Err(MfrsError::validation(format!(
                "frequency period must be >= 2, got {den}"
            )));
        }
        Ok(Self { num, den })
    }

    /// The fundamental of an integer period.
    pub fn of_period(period: u64) -> Result<Self> {
        Self::new(1, period)
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// Smallest positive number of steps after which the waveform repeats.
    pub fn cycle_len(&self) -> u64 {
        self.den / gcd(self.num, self.den)
    }

    /// Reduced form.
    pub fn reduced(&self) -> Self {
        let g = gcd(self.num, self.den);
        Self {
            num: self.num / g,
            den: self.den / g,
        }
    }

    /// Nearest DFT bin `round(len * num / den)`, halves rounded up.
    pub fn nearest_bin(&self, len: usize) -> usize {
        let num = 2 * len as u128 * self.num as u128 + self.den as u128;
        (num / (2 * self.den as u128)) as usize
    }
}

impl PartialEq for Frequency {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Frequency {}

impl PartialOrd for Frequency {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frequency {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128))
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

pub(crate) fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

pub(crate) fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}
