use std::cmp::Ordering;
use std::fmt;

use num_bigint::BigUint;
use num_traits::float::FloatCore;
use num_traits::{ToPrimitive, Zero};

use crate::{Error, Result};

/// An exact dyadic rational: `(-1)^sign * significand * 2^exponent`.
///
/// The representation is unique: the significand is odd, or zero with a
/// zero exponent. Zero keeps its sign so flushed negative values re-encode
/// as negative zero codes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ExactValue {
    negative: bool,
    significand: BigUint,
    exponent: i64,
}

impl ExactValue {
    /// Signed zero.
    pub fn zero(negative: bool) -> Self {
        ExactValue {
            negative,
            significand: BigUint::zero(),
            exponent: 0,
        }
    }

    /// Build and normalise from raw parts.
    pub fn from_parts(negative: bool, significand: BigUint, exponent: i64) -> Self {
        let mut v = ExactValue {
            negative,
            significand,
            exponent,
        };
        v.normalize();
        v
    }

    pub fn from_int(n: i64) -> Self {
        ExactValue::from_parts(n < 0, BigUint::from(n.unsigned_abs()), 0)
    }

    /// Exact conversion from a finite binary float (f32 or f64).
    pub fn from_float<F: FloatCore>(x: F) -> Result<Self> {
        if x.is_nan() || x.is_infinite() {
            return Err(Error::NonFiniteInput);
        }
        let (mantissa, exponent, sign) = x.integer_decode();
        if mantissa == 0 {
            return Ok(ExactValue::zero(sign < 0));
        }
        Ok(ExactValue::from_parts(
            sign < 0,
            BigUint::from(mantissa),
            exponent as i64,
        ))
    }

    fn normalize(&mut self) {
        match self.significand.trailing_zeros() {
            None => self.exponent = 0,
            Some(0) => {}
            Some(tz) => {
                self.significand >>= tz;
                self.exponent += tz as i64;
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.significand.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.negative
    }

    pub fn significand(&self) -> &BigUint {
        &self.significand
    }

    pub fn exponent(&self) -> i64 {
        self.exponent
    }

    /// `floor(log2 |v|)`; `None` for zero.
    pub fn floor_log2(&self) -> Option<i64> {
        if self.is_zero() {
            None
        } else {
            Some(self.significand.bits() as i64 - 1 + self.exponent)
        }
    }

    /// Exact scaling by a power of two.
    pub fn scale_pow2(&self, k: i64) -> Self {
        if self.is_zero() {
            self.clone()
        } else {
            ExactValue {
                negative: self.negative,
                significand: self.significand.clone(),
                exponent: self.exponent + k,
            }
        }
    }

    pub fn negate(&self) -> Self {
        ExactValue {
            negative: !self.negative,
            significand: self.significand.clone(),
            exponent: self.exponent,
        }
    }

    /// Compare absolute values.
    pub fn cmp_magnitude(&self, other: &Self) -> Ordering {
        match (self.is_zero(), other.is_zero()) {
            (true, true) => return Ordering::Equal,
            (true, false) => return Ordering::Less,
            (false, true) => return Ordering::Greater,
            _ => {}
        }
        let la = self.floor_log2().unwrap();
        let lb = other.floor_log2().unwrap();
        if la != lb {
            return la.cmp(&lb);
        }
        // Same binade: align the significands on a common scale.
        if self.exponent >= other.exponent {
            let shifted = &self.significand << (self.exponent - other.exponent) as u64;
            shifted.cmp(&other.significand)
        } else {
            let shifted = &other.significand << (other.exponent - self.exponent) as u64;
            self.significand.cmp(&shifted)
        }
    }

    /// Total order on values; -0 and +0 compare equal.
    pub fn cmp_value(&self, other: &Self) -> Ordering {
        if self.is_zero() && other.is_zero() {
            return Ordering::Equal;
        }
        let sa = if self.is_zero() {
            0
        } else if self.negative {
            -1
        } else {
            1
        };
        let sb = if other.is_zero() {
            0
        } else if other.negative {
            -1
        } else {
            1
        };
        if sa != sb {
            return sa.cmp(&sb);
        }
        let mag = self.cmp_magnitude(other);
        if sa < 0 {
            mag.reverse()
        } else {
            mag
        }
    }

    /// Nearest f64; saturates to infinity far outside the f64 range.
    /// Intended for reporting, not for arithmetic.
    pub fn to_f64(&self) -> f64 {
        if self.is_zero() {
            return if self.negative { -0.0 } else { 0.0 };
        }
        let bits = self.significand.bits();
        let (top, dropped) = if bits > 53 {
            let shifted: BigUint = &self.significand >> (bits - 53);
            (shifted.to_f64().unwrap(), (bits - 53) as i64)
        } else {
            (self.significand.to_f64().unwrap(), 0)
        };
        let e = self.exponent + dropped;
        let magnitude = if e > 1100 {
            f64::INFINITY
        } else if e < -1200 {
            0.0
        } else {
            top * 2f64.powi(e as i32)
        };
        if self.negative {
            -magnitude
        } else {
            magnitude
        }
    }
}

impl fmt::Display for ExactValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "{}0", if self.negative { "-" } else { "+" });
        }
        write!(
            f,
            "{}{}*2^{}",
            if self.negative { "-" } else { "+" },
            self.significand,
            self.exponent
        )
    }
}

/// Shift right with round-to-nearest, ties to even.
pub(crate) fn rne_shift_right(x: &BigUint, shift: u64) -> BigUint {
    if shift == 0 {
        return x.clone();
    }
    let q: BigUint = x >> shift;
    let rem: BigUint = x - (&q << shift);
    let half: BigUint = BigUint::from(1u8) << (shift - 1);
    match rem.cmp(&half) {
        Ordering::Less => q,
        Ordering::Greater => q + 1u8,
        Ordering::Equal => {
            if (&q & BigUint::from(1u8)).is_zero() {
                q
            } else {
                q + 1u8
            }
        }
    }
}
