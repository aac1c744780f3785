//! Exact golden references for the MAC datapath.
//!
//! Everything here computes in exact dyadic arithmetic ([`ExactValue`]) or
//! plain integers, with a single final truncation where an output format
//! requires one. The routines deliberately share no arithmetic with the
//! datapath model: products and sums are formed on normalised dyadic
//! rationals, and [`truncate_exact_to_fp16`] packs binary16 fields on its
//! own rather than reusing the datapath's normaliser. A bug planted on
//! either side therefore shows up as a mismatch instead of cancelling out.

use num_bigint::{BigInt, Sign};
use num_traits::ToPrimitive;

use crate::formats::{ExactValue, ScalarCode, FP16, INT16};
use crate::{Error, Result};

/// Exact product of two dyadic values.
///
/// Zero operands produce a signed zero carrying the XOR of the operand
/// signs, matching how a sign-magnitude multiplier treats them.
pub fn exact_mul(a: &ExactValue, b: &ExactValue) -> ExactValue {
    let negative = a.is_negative() ^ b.is_negative();
    if a.is_zero() || b.is_zero() {
        return ExactValue::zero(negative);
    }
    ExactValue::from_parts(
        negative,
        a.significand() * b.significand(),
        a.exponent() + b.exponent(),
    )
}

/// Exact sum of two dyadic values. Complete cancellation yields `+0`.
pub fn exact_add(a: &ExactValue, b: &ExactValue) -> ExactValue {
    if a.is_zero() && b.is_zero() {
        // Only (-0) + (-0) keeps the negative sign.
        return ExactValue::zero(a.is_negative() && b.is_negative());
    }
    if a.is_zero() {
        return b.clone();
    }
    if b.is_zero() {
        return a.clone();
    }
    let e0 = a.exponent().min(b.exponent());
    let sum = to_signed(a, e0) + to_signed(b, e0);
    let (sign, magnitude) = sum.into_parts();
    ExactValue::from_parts(sign == Sign::Minus, magnitude, e0)
}

fn to_signed(v: &ExactValue, base_exponent: i64) -> BigInt {
    let shifted = v.significand() << (v.exponent() - base_exponent) as u64;
    let sign = if v.is_negative() {
        Sign::Minus
    } else {
        Sign::Plus
    };
    BigInt::from_biguint(sign, shifted)
}

/// Exact sum of a slice of dyadic values. The empty sum is `+0`.
pub fn exact_sum(terms: &[ExactValue]) -> ExactValue {
    let mut acc = ExactValue::zero(false);
    for t in terms {
        acc = exact_add(&acc, t);
    }
    acc
}

/// A dot product together with the exact per-lane products that formed it.
#[derive(Debug, Clone)]
pub struct ExactDot {
    /// One exact product per lane, in lane order.
    pub terms: Vec<ExactValue>,
    /// Exact sum of `terms`.
    pub sum: ExactValue,
}

/// Exact dot product of two equal-length vectors; no rounding anywhere.
pub fn exact_dot(xs: &[ExactValue], ws: &[ExactValue]) -> Result<ExactValue> {
    Ok(exact_dot_detailed(xs, ws)?.sum)
}

/// Like [`exact_dot`] but also returns the individual products.
pub fn exact_dot_detailed(xs: &[ExactValue], ws: &[ExactValue]) -> Result<ExactDot> {
    if xs.len() != ws.len() {
        return Err(Error::OperandLength {
            x: xs.len(),
            w: ws.len(),
        });
    }
    let terms: Vec<ExactValue> = xs.iter().zip(ws).map(|(x, w)| exact_mul(x, w)).collect();
    let sum = exact_sum(&terms);
    Ok(ExactDot { terms, sum })
}

/// Exact integer dot product. The widths in play (lanes of at most 16-bit
/// operands, reductions far below 2^40) keep this well inside `i64`.
pub fn exact_int_dot(xs: &[i64], ws: &[i64]) -> Result<i64> {
    if xs.len() != ws.len() {
        return Err(Error::OperandLength {
            x: xs.len(),
            w: ws.len(),
        });
    }
    Ok(xs.iter().zip(ws).map(|(x, w)| x * w).sum())
}

/// Clamp an integer sum to the signed 16-bit output range.
pub fn saturate16(sum: i64) -> i16 {
    sum.clamp(i16::MIN as i64, i16::MAX as i64) as i16
}

/// [`saturate16`] packed as an INT16 output code.
pub fn saturate16_code(sum: i64) -> ScalarCode {
    ScalarCode::new(INT16, saturate16(sum) as u16)
}

/// Truncate an exact value to the FP16 output format in one rounding step.
///
/// Policy, identical to the datapath output stage but implemented
/// independently: round toward zero to 10 fraction bits; magnitudes below
/// the minimum normal (2^-14) flush to a zero of the same sign, with exact
/// zero mapping to `+0`; magnitudes at or above 2^17 saturate to the
/// largest finite code. The format has no infinities or NaNs, so the top
/// exponent field holds ordinary values. The result's magnitude never
/// exceeds the input's.
pub fn truncate_exact_to_fp16(v: &ExactValue) -> ScalarCode {
    if v.is_zero() {
        return ScalarCode::new(FP16, 0);
    }
    let sign = (v.is_negative() as u16) << 15;
    let k = v.floor_log2().expect("nonzero value has a binade");
    if k < -14 {
        return ScalarCode::new(FP16, sign);
    }
    if k > 16 {
        return ScalarCode::new(FP16, sign | 0x7FFF);
    }
    // m = floor(|v| * 2^(10-k)) lands in [2^10, 2^11); the shift right is
    // the truncation.
    let t = v.exponent() - (k - 10);
    let m = if t >= 0 {
        v.significand() << t as u64
    } else {
        v.significand() >> (-t) as u64
    };
    let m10 = (m.to_u64().expect("11-bit mantissa") as u16) & 0x3FF;
    let e_field = (k + 15) as u16;
    ScalarCode::new(FP16, sign | (e_field << 10) | m10)
}

/// Exact matrix product used as the denominator for relative-error reports.
///
/// `a` is an `m x k` matrix in row-major order and `b_t` the transposed
/// right-hand side (`n x k`, row-major), so both operands of every dot
/// product are contiguous. Returns the `m x n` product row-major, every
/// entry an exact dyadic value.
pub fn reference_gemm(
    a: &[ExactValue],
    b_t: &[ExactValue],
    m: usize,
    n: usize,
    k: usize,
) -> Result<Vec<ExactValue>> {
    if a.len() != m * k {
        return Err(Error::Shape(format!(
            "left matrix holds {} values, expected {}x{}",
            a.len(),
            m,
            k
        )));
    }
    if b_t.len() != n * k {
        return Err(Error::Shape(format!(
            "transposed right matrix holds {} values, expected {}x{}",
            b_t.len(),
            n,
            k
        )));
    }
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        let row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let col = &b_t[j * k..(j + 1) * k];
            out.push(exact_dot(row, col)?);
        }
    }
    Ok(out)
}
