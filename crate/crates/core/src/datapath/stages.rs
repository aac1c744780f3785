//! The shared pipeline stages: sign XOR bundle, exponent extraction and
//! alignment, the exact adder tree, the leading-one normalizer and the
//! output rounder. Both datapath structures are built from these.

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::{Mode, OutputFormat};
use crate::formats::{ScalarCode, FP16, INT16};
use crate::{Error, Result};

/// Sentinel `e_max` reported when every term of a dot product is zero.
pub const E_MAX_FLOOR: i64 = i64::MIN;

/// One adder-tree input: a lane product or the injected partial sum.
///
/// In a mode whose fraction convention is `F`, the value of a term is
/// `sign * significand * 2^(exponent - F)`. Lane significands stay below
/// 2^16 (below 2^8 in 16-lane modes); the injected partial sum carries at
/// most 15 bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProductTerm {
    /// +1 or -1.
    pub sign: i8,
    /// Effective exponent; 0 in plain integer modes.
    pub exponent: i64,
    /// Unsigned product magnitude.
    pub significand: u32,
    /// Zero terms never participate in the max-exponent search.
    pub is_zero: bool,
}

impl ProductTerm {
    pub fn zero() -> Self {
        ProductTerm {
            sign: 1,
            exponent: 0,
            significand: 0,
            is_zero: true,
        }
    }

    pub fn new(sign: i8, exponent: i64, significand: u32) -> Self {
        debug_assert!(sign == 1 || sign == -1);
        if significand == 0 {
            ProductTerm::zero()
        } else {
            ProductTerm {
                sign,
                exponent,
                significand,
                is_zero: false,
            }
        }
    }

    /// Build from a signed product (integer lanes).
    pub fn from_signed(product: i64, exponent: i64) -> Self {
        if product == 0 {
            ProductTerm::zero()
        } else {
            ProductTerm {
                sign: if product < 0 { -1 } else { 1 },
                exponent,
                significand: product.unsigned_abs() as u32,
                is_zero: false,
            }
        }
    }
}

/// Alignment decisions for one dot product.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentSet {
    /// Largest effective exponent over non-zero terms, or [`E_MAX_FLOOR`].
    pub e_max: i64,
    /// Right-shift of each term relative to `e_max` (0 for zero terms).
    pub shifts: Vec<u32>,
    /// Adder-tree width; wide enough that no aligned bit is ever dropped.
    pub accumulator_width: u32,
}

impl AlignmentSet {
    /// The common left offset: the largest shift in the set. Terms are
    /// accumulated as `significand << (cap - shift)`, keeping everything
    /// integral.
    pub fn cap(&self) -> u32 {
        self.shifts.iter().copied().max().unwrap_or(0)
    }
}

/// Element-wise product signs: XOR of the operand sign bits, as +/-1.
pub fn xor_bundle(signs_x: &[bool], signs_w: &[bool]) -> Result<Vec<i8>> {
    if signs_x.len() != signs_w.len() {
        return Err(Error::LaneMismatch {
            expected: signs_x.len(),
            got: signs_w.len(),
        });
    }
    debug_assert!(signs_x.len() <= 16);
    Ok(signs_x
        .iter()
        .zip(signs_w)
        .map(|(&a, &b)| if a ^ b { -1 } else { 1 })
        .collect())
}

/// Find the reference exponent and per-term shifts for one dot product.
///
/// `shared_bias_add` is the shared-exponent sum `e_x + e_y` in MXFP mode
/// and 0 everywhere else; it is added uniformly to every term before
/// comparison, so the argmax lane and all shift amounts are unaffected by
/// it alone.
pub fn exponent_extract(terms: &[ProductTerm], mode: &Mode, shared_bias_add: i64) -> AlignmentSet {
    debug_assert!(!terms.is_empty());
    let e_max = terms
        .iter()
        .filter(|t| !t.is_zero)
        .map(|t| t.exponent + shared_bias_add)
        .max()
        .unwrap_or(E_MAX_FLOOR);
    let shifts = terms
        .iter()
        .map(|t| {
            if t.is_zero {
                0
            } else {
                (e_max - (t.exponent + shared_bias_add)) as u32
            }
        })
        .collect();
    AlignmentSet {
        e_max,
        shifts,
        accumulator_width: mode.accumulator_width(terms.len()),
    }
}

/// Accumulate aligned terms exactly: `sum sign_i * sig_i * 2^(cap - shift_i)`.
///
/// No bits are dropped, so the result times `2^(e_max - cap - F)` is the
/// exact real dot product of the decoded inputs.
pub fn align_and_accumulate(terms: &[ProductTerm], alignment: &AlignmentSet) -> BigInt {
    debug_assert_eq!(terms.len(), alignment.shifts.len());
    let cap = alignment.cap();
    let mut acc = BigInt::zero();
    for (t, &shift) in terms.iter().zip(&alignment.shifts) {
        if t.is_zero {
            continue;
        }
        let mut v = BigInt::from(t.significand) << (cap - shift) as u64;
        if t.sign < 0 {
            v = -v;
        }
        acc += v;
    }
    debug_assert!(
        acc.magnitude().bits() <= alignment.accumulator_width as u64,
        "accumulator width violated"
    );
    acc
}

/// Range classification of a normalized value against the output format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormFlag {
    InRange,
    Zero,
    /// Exponent above the output range; rounds to max finite.
    Saturated,
    /// Exponent below the smallest normal; flushes to signed zero.
    Flushed,
}

/// Leading-one-normalized accumulator: `(-1)^sign * 1.fraction * 2^exponent`
/// with the full unrounded fraction (`frac_len` bits below the leading one).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Normalized {
    pub sign: bool,
    pub exponent: i64,
    pub fraction: BigUint,
    pub frac_len: u64,
    pub flag: NormFlag,
}

/// Locate the leading one of the accumulator and derive the output
/// exponent. `frac_bits` is the mode's fraction convention `F`; the exact
/// value being normalized is `acc * 2^(e_max - cap - F)`.
pub fn normalize(acc: &BigInt, e_max: i64, cap: u32, frac_bits: u32) -> Normalized {
    if acc.is_zero() {
        return Normalized {
            sign: false,
            exponent: 0,
            fraction: BigUint::zero(),
            frac_len: 0,
            flag: NormFlag::Zero,
        };
    }
    let sign = acc.is_negative();
    let mag = acc.magnitude();
    let k = mag.bits() - 1;
    let exponent = k as i64 + e_max - cap as i64 - frac_bits as i64;
    let flag = if exponent > FP16.max_exponent() {
        NormFlag::Saturated
    } else if exponent < FP16.min_normal_exponent() {
        NormFlag::Flushed
    } else {
        NormFlag::InRange
    };
    Normalized {
        sign,
        exponent,
        fraction: mag - (BigUint::one() << k),
        frac_len: k,
        flag,
    }
}

/// Input to the output rounder.
#[derive(Debug)]
pub enum RounderInput<'a> {
    /// A normalized FP value headed for the FP16 port.
    Normalized(&'a Normalized),
    /// The raw integer accumulator headed for the INT16 port.
    Integer(&'a BigInt),
}

/// Produce the 16-bit output code. FP16 mantissas are truncated toward
/// zero to 10 fraction bits; INT16 saturates to the signed 16-bit range.
pub fn round_output(input: RounderInput<'_>, mode: &Mode) -> ScalarCode {
    match (input, mode.output_format) {
        (RounderInput::Normalized(n), OutputFormat::Fp16) => pack_fp16(n),
        (RounderInput::Integer(acc), OutputFormat::Int16) => saturate_int16(acc),
        _ => panic!("rounder input does not match the mode's output port"),
    }
}

fn pack_fp16(n: &Normalized) -> ScalarCode {
    let sign = (n.sign as u16) << 15;
    let bits = match n.flag {
        NormFlag::Zero => 0,
        NormFlag::Flushed => sign,
        NormFlag::Saturated => sign | 0x7FFF,
        NormFlag::InRange => {
            let m: u16 = if n.frac_len >= 10 {
                (&n.fraction >> (n.frac_len - 10)).to_u16().unwrap()
            } else {
                n.fraction.to_u16().unwrap() << (10 - n.frac_len)
            };
            let e_field = (n.exponent + FP16.bias()) as u16;
            sign | (e_field << 10) | m
        }
    };
    ScalarCode::new(FP16, bits)
}

fn saturate_int16(acc: &BigInt) -> ScalarCode {
    let v = acc
        .to_i64()
        .map(|v| v.clamp(-32768, 32767))
        .unwrap_or(if acc.is_negative() { -32768 } else { 32767 });
    ScalarCode::new(INT16, v as i16 as u16)
}

#[cfg(test)]
mod tests {
    use super::super::{Mode, ModeName};
    use super::*;

    fn term(exponent: i64) -> ProductTerm {
        ProductTerm::new(1, exponent, 1)
    }

    #[test]
    fn xor_bundle_signs() {
        assert_eq!(xor_bundle(&[false], &[false]).unwrap(), vec![1]);
        assert_eq!(xor_bundle(&[true], &[false]).unwrap(), vec![-1]);
        assert_eq!(xor_bundle(&[true], &[true]).unwrap(), vec![1]);
        assert!(xor_bundle(&[true, false], &[true]).is_err());
        // Signs must track the sign of the exact product.
        let mut state = 0xD1B54A32D192ED03u64;
        for _ in 0..16 {
            state = state.wrapping_mul(0x2545F4914F6CDD1D).wrapping_add(1);
            let (a, b) = (state & 1 == 1, state & 2 == 2);
            let x = if a { -3.0f64 } else { 3.0 };
            let y = if b { -2.0f64 } else { 2.0 };
            let want = if x * y < 0.0 { -1 } else { 1 };
            assert_eq!(xor_bundle(&[a], &[b]).unwrap()[0], want);
        }
    }

    #[test]
    fn exponent_extract_shifts() {
        let mode = Mode::from_name(ModeName::Bf16);
        let terms: Vec<ProductTerm> = [3, 1, 5, 5].iter().map(|&e| term(e)).collect();
        let a = exponent_extract(&terms, &mode, 0);
        assert_eq!(a.e_max, 5);
        assert_eq!(a.shifts, vec![2, 4, 0, 0]);
        assert_eq!(a.cap(), 4);
        // Width invariant: product bits + worst-case shift + lane headroom.
        let floor = 16 + mode.max_alignment_shift() + 3;
        assert!(a.accumulator_width >= floor);
    }

    #[test]
    fn exponent_extract_all_zero() {
        let mode = Mode::from_name(ModeName::Bf16);
        let terms = vec![ProductTerm::zero(); 4];
        let a = exponent_extract(&terms, &mode, 0);
        assert_eq!(a.e_max, E_MAX_FLOOR);
        assert!(a.shifts.iter().all(|&s| s == 0));
        assert!(align_and_accumulate(&terms, &a).is_zero());
    }

    #[test]
    fn shared_bias_moves_e_max_but_not_shifts() {
        let mode = Mode::from_name(ModeName::MxFp8);
        let terms: Vec<ProductTerm> = [-3, 7, 0, 7, 2].iter().map(|&e| term(e)).collect();
        let base = exponent_extract(&terms, &mode, 0);
        let bumped = exponent_extract(&terms, &mode, 6);
        assert_eq!(bumped.e_max, base.e_max + 6);
        assert_eq!(bumped.shifts, base.shifts);
    }

    #[test]
    fn zero_terms_never_set_e_max() {
        let mode = Mode::from_name(ModeName::Bf16);
        let mut terms = vec![term(2), ProductTerm::zero(), term(-1)];
        terms[1].exponent = 99; // must be ignored: the term is zero
        let a = exponent_extract(&terms, &mode, 0);
        assert_eq!(a.e_max, 2);
        assert_eq!(a.shifts, vec![0, 0, 3]);
    }

    #[test]
    fn accumulate_identity_and_cancellation() {
        let mode = Mode::from_name(ModeName::Fp8);
        let single = vec![ProductTerm::new(-1, 3, 42)];
        let a = exponent_extract(&single, &mode, 0);
        assert_eq!(align_and_accumulate(&single, &a), BigInt::from(-42));
        let pair = vec![ProductTerm::new(1, 3, 42), ProductTerm::new(-1, 3, 42)];
        let a = exponent_extract(&pair, &mode, 0);
        assert!(align_and_accumulate(&pair, &a).is_zero());
    }

    #[test]
    fn accumulate_weights_by_exponent_gap() {
        // Terms 1*2^4 and 1*2^0 on a zero-fraction grid: 16 + 1 = 17.
        let mode = Mode::from_name(ModeName::Bf16);
        let terms = vec![term(4), term(0)];
        let a = exponent_extract(&terms, &mode, 0);
        assert_eq!(align_and_accumulate(&terms, &a), BigInt::from(17));
    }

    #[test]
    fn normalize_unit_accumulator() {
        let n = normalize(&BigInt::from(1), 0, 0, 0);
        assert_eq!(n.flag, NormFlag::InRange);
        assert_eq!(n.exponent, 0);
        assert_eq!(n.frac_len, 0);
        let mode = Mode::from_name(ModeName::Bf16);
        let out = round_output(RounderInput::Normalized(&n), &mode);
        assert_eq!(out.bits, 0x3C00);
    }

    #[test]
    fn normalize_three_halves_pattern() {
        // acc = 3 * 2^k: leading one at k+1, fraction 0b100...0.
        for k in [0u64, 3, 17, 40] {
            let n = normalize(&(BigInt::from(3) << k), 0, 0, 0);
            assert_eq!(n.exponent, k as i64 + 1);
            assert_eq!(n.frac_len, k + 1);
            assert_eq!(n.fraction, BigUint::one() << k);
        }
    }

    #[test]
    fn normalize_range_edges() {
        let zero = normalize(&BigInt::zero(), E_MAX_FLOOR, 0, 0);
        assert_eq!(zero.flag, NormFlag::Zero);
        // 2^17 with no offsets: exponent 17 > 16 saturates.
        let sat = normalize(&(BigInt::from(-1) << 17u32), 0, 0, 0);
        assert_eq!(sat.flag, NormFlag::Saturated);
        assert!(sat.sign);
        // 2^-15 flushes (smallest FP16 normal is 2^-14).
        let flush = normalize(&BigInt::from(1), -15, 0, 0);
        assert_eq!(flush.flag, NormFlag::Flushed);
        let mode = Mode::from_name(ModeName::Bf16);
        assert_eq!(
            round_output(RounderInput::Normalized(&sat), &mode).bits,
            0xFFFF
        );
        assert_eq!(
            round_output(RounderInput::Normalized(&flush), &mode).bits,
            0x0000
        );
        let neg_flush = normalize(&BigInt::from(-1), -15, 0, 0);
        assert_eq!(
            round_output(RounderInput::Normalized(&neg_flush), &mode).bits,
            0x8000
        );
    }

    #[test]
    fn mantissa_truncates_toward_zero() {
        // 1 + 2^-11 on an 11-bit fraction grid truncates to 1.0 for both
        // signs (toward zero, away from -inf for the negative case).
        let mode = Mode::from_name(ModeName::Bf16);
        for (acc, want) in [(2049i64, 0x3C00u16), (-2049, 0xBC00)] {
            let n = normalize(&BigInt::from(acc), 0, 0, 11);
            let out = round_output(RounderInput::Normalized(&n), &mode);
            assert_eq!(out.bits, want);
        }
        // An exactly representable mantissa passes through unchanged: the
        // value sits in the 2^0 binade, so the exponent field is 15.
        let n = normalize(&BigInt::from(0b110_1010_1011u64), 0, 0, 10);
        let out = round_output(RounderInput::Normalized(&n), &mode);
        assert_eq!(out.bits, (15u16 << 10) | 0b10_1010_1011);
    }

    #[test]
    fn int16_saturation() {
        let mode = Mode::from_name(ModeName::Int8);
        let r = |v: i64| round_output(RounderInput::Integer(&BigInt::from(v)), &mode);
        assert_eq!(r(40000).as_int(), 32767);
        assert_eq!(r(-40000).as_int(), -32768);
        assert_eq!(r(-1).as_int(), -1);
        assert_eq!(r(1234).as_int(), 1234);
        let huge = BigInt::from(i64::MAX) * 16;
        assert_eq!(
            round_output(RounderInput::Integer(&huge), &mode).as_int(),
            32767
        );
    }
}
