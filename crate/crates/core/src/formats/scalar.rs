use num_bigint::BigUint;
use num_traits::float::FloatCore;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::exact::{rne_shift_right, ExactValue};
use super::{FormatDescriptor, FormatKind};
use crate::Result;

/// One encoded element together with its format.
///
/// Bits above the element width are always zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScalarCode {
    pub format: FormatDescriptor,
    pub bits: u16,
}

impl ScalarCode {
    /// Wrap raw bits, masking anything above the element width.
    pub fn new(format: FormatDescriptor, bits: u16) -> Self {
        ScalarCode {
            format,
            bits: bits & format.code_mask(),
        }
    }

    /// The code's two's-complement integer reading (integer kinds).
    pub fn as_int(&self) -> i32 {
        sign_extend(self.bits, &self.format)
    }
}

fn sign_extend(bits: u16, fmt: &FormatDescriptor) -> i32 {
    let w = fmt.total_bits();
    let raw = (bits & fmt.code_mask()) as i32;
    if fmt.sign_bits == 1 && (raw >> (w - 1)) & 1 == 1 {
        raw - (1 << w)
    } else {
        raw
    }
}

/// Decode a code to its exact value. Total over the code space: integer
/// kinds read two's complement, FP kinds read `(-1)^s * 1.m * 2^(e-bias)`
/// with a zero exponent field flushing to signed zero. MXINT elements carry
/// their implicit `2^-M` scale; the shared block exponent is applied by
/// [`super::dequantize_block`].
pub fn decode(code: &ScalarCode) -> ExactValue {
    let fmt = &code.format;
    let bits = code.bits & fmt.code_mask();
    match fmt.kind {
        FormatKind::Int => ExactValue::from_int(sign_extend(bits, fmt) as i64),
        FormatKind::MxInt => ExactValue::from_int(sign_extend(bits, fmt) as i64)
            .scale_pow2(-(fmt.mantissa_bits as i64)),
        FormatKind::Fp | FormatKind::MxFp => {
            let m_bits = fmt.mantissa_bits as u32;
            let e_bits = fmt.exponent_bits as u32;
            let mant = (bits as u32) & ((1 << m_bits) - 1);
            let field = ((bits as u32) >> m_bits) & ((1 << e_bits) - 1);
            let neg = (bits >> (e_bits + m_bits)) & 1 == 1;
            if field == 0 {
                ExactValue::zero(neg)
            } else {
                ExactValue::from_parts(
                    neg,
                    BigUint::from((1u32 << m_bits) | mant),
                    field as i64 - fmt.bias() - m_bits as i64,
                )
            }
        }
    }
}

/// Encode an exact value: round to nearest (ties to even), saturate at the
/// format extremes, and flush FP magnitudes below the smallest normal to
/// signed zero. Total—never fails.
pub fn encode_exact(v: &ExactValue, fmt: &FormatDescriptor) -> ScalarCode {
    let bits = match fmt.kind {
        FormatKind::Int | FormatKind::MxInt => encode_int(v, fmt),
        FormatKind::Fp | FormatKind::MxFp => encode_fp(v, fmt),
    };
    ScalarCode { format: *fmt, bits }
}

/// Encode a finite float (f32 or f64). Non-finite input is an error.
pub fn encode_real<F: FloatCore>(x: F, fmt: &FormatDescriptor) -> Result<ScalarCode> {
    Ok(encode_exact(&ExactValue::from_float(x)?, fmt))
}

fn encode_int(v: &ExactValue, fmt: &FormatDescriptor) -> u16 {
    if v.is_zero() {
        return 0;
    }
    let w = fmt.total_bits();
    // MXINT elements live on the 2^-M grid; plain INT on the unit grid.
    let grid_shift = if fmt.kind == FormatKind::MxInt {
        fmt.mantissa_bits as i64
    } else {
        0
    };
    let e = v.exponent() + grid_shift;
    let n: BigUint = if e >= 0 {
        v.significand() << e as u64
    } else {
        rne_shift_right(v.significand(), (-e) as u64)
    };
    let (neg_limit, pos_limit) = if fmt.sign_bits == 1 {
        (
            BigUint::one() << (w - 1),
            (BigUint::one() << (w - 1)) - 1u8,
        )
    } else {
        (BigUint::zero(), (BigUint::one() << w) - 1u8)
    };
    let signed: i32 = if v.is_negative() {
        -(n.min(neg_limit).to_i64().unwrap() as i32)
    } else {
        n.min(pos_limit).to_i64().unwrap() as i32
    };
    (signed & fmt.code_mask() as i32) as u16
}

fn encode_fp(v: &ExactValue, fmt: &FormatDescriptor) -> u16 {
    let e_bits = fmt.exponent_bits as u32;
    let m_bits = fmt.mantissa_bits as u32;
    let sign_bit = if v.is_negative() {
        1u16 << (e_bits + m_bits)
    } else {
        0
    };
    if v.is_zero() {
        return sign_bit;
    }
    let mut k = v.floor_log2().unwrap();
    if k < fmt.min_normal_exponent() {
        // Below the smallest normal: flush to signed zero.
        return sign_bit;
    }
    // Round |v| to 1+M significand bits at binade k.
    let t = v.exponent() + m_bits as i64 - k;
    let mut mant: BigUint = if t >= 0 {
        v.significand() << t as u64
    } else {
        rne_shift_right(v.significand(), (-t) as u64)
    };
    if mant.bits() as u32 == m_bits + 2 {
        // Rounded up into the next binade.
        k += 1;
        mant = BigUint::one() << m_bits;
    }
    if k > fmt.max_exponent() {
        // Saturate to the largest finite code.
        let field = (1u16 << e_bits) - 1;
        return sign_bit | (field << m_bits) | ((1u16 << m_bits) - 1);
    }
    let field = (k + fmt.bias()) as u16;
    let m = (mant.to_u32().unwrap() as u16) & ((1u16 << m_bits) - 1);
    sign_bit | (field << m_bits) | m
}

/// `(smallest positive normal, largest finite)` of a format, both exact and
/// consistent with decoding the full code space.
pub fn format_range(fmt: &FormatDescriptor) -> (ExactValue, ExactValue) {
    let m = fmt.mantissa_bits as i64;
    match fmt.kind {
        FormatKind::Fp | FormatKind::MxFp => (
            ExactValue::from_parts(false, BigUint::one(), fmt.min_normal_exponent()),
            ExactValue::from_parts(
                false,
                (BigUint::one() << (m as u64 + 1)) - 1u8,
                fmt.max_exponent() - m,
            ),
        ),
        FormatKind::Int => (
            ExactValue::from_int(1),
            ExactValue::from_parts(false, (BigUint::one() << fmt.total_bits().saturating_sub(fmt.sign_bits as u32)) - 1u8, 0),
        ),
        FormatKind::MxInt => (
            ExactValue::from_parts(false, BigUint::one(), -m),
            ExactValue::from_parts(false, (BigUint::one() << m as u64) - 1u8, -m),
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::super::{BF16, FP16, FP8_E4M3, INT4, INT8, MXINT8, PRESETS};
    use super::*;

    fn dec_bits(fmt: FormatDescriptor, bits: u16) -> ExactValue {
        decode(&ScalarCode::new(fmt, bits))
    }

    #[test]
    fn known_decodings() {
        assert_eq!(dec_bits(BF16, 0x3F80), ExactValue::from_int(1));
        assert_eq!(dec_bits(FP8_E4M3, 0x38), ExactValue::from_int(1));
        assert_eq!(dec_bits(INT4, 0x8), ExactValue::from_int(-8));
        assert_eq!(dec_bits(INT8, 0x80), ExactValue::from_int(-128));
        // MXINT8 element 64 is 64/128 = 0.5 before the shared exponent.
        assert_eq!(
            dec_bits(MXINT8, 64),
            ExactValue::from_float(0.5f64).unwrap()
        );
        // Zero exponent field flushes, keeping the sign.
        assert_eq!(dec_bits(BF16, 0x0050), ExactValue::zero(false));
        assert_eq!(dec_bits(FP8_E4M3, 0x85), ExactValue::zero(true));
    }

    #[test]
    fn known_encodings() {
        let enc = |x: f64, fmt: &FormatDescriptor| encode_real(x, fmt).unwrap().bits;
        assert_eq!(enc(0.0, &FP8_E4M3), 0x00);
        assert_eq!(enc(-0.0, &FP8_E4M3), 0x80);
        assert_eq!(enc(1.0, &BF16), 0x3F80);
        assert_eq!(enc(-3.5, &FP8_E4M3), 0xC6);
        assert_eq!(enc(5.0, &INT8), 5);
        assert_eq!(enc(-5.0, &INT8), 0xFB);
    }

    /// Independent nearest-code check: enumerate every FP8 code, measure the
    /// exact distance in f64 (all FP8 values and their differences from -3.5
    /// are exactly representable), and confirm the encoder picked a nearest
    /// code.
    #[test]
    fn fp8_encode_matches_exhaustive_nearest() {
        for &target in &[-3.5f64, 0.3, 1.0, -0.071, 447.9, 480.0, 2.5e-2] {
            let got = encode_real(target, &FP8_E4M3).unwrap();
            let got_dist = (decode(&got).to_f64() - target).abs();
            let mut best = f64::INFINITY;
            for bits in 0u16..=0xFF {
                let v = dec_bits(FP8_E4M3, bits).to_f64();
                best = best.min((v - target).abs());
            }
            assert_eq!(
                got_dist, best,
                "encode({target}) gave bits {:#04x}, not a nearest code",
                got.bits
            );
        }
    }

    #[test]
    fn encode_breaks_ties_to_even() {
        // The FP8 step at binade [2,4) is 0.25. 2.125 sits exactly between
        // 2.0 (m=000) and 2.25 (m=001): ties to the even mantissa, 2.0.
        assert_eq!(encode_real(2.125f64, &FP8_E4M3).unwrap().bits, 0x40);
        // 2.375 sits between 2.25 (m=001) and 2.5 (m=010): ties to 2.5.
        assert_eq!(encode_real(2.375f64, &FP8_E4M3).unwrap().bits, 0x42);
        // Integer tie: 2.5 rounds to 2, 3.5 rounds to 4.
        assert_eq!(encode_real(2.5f64, &INT8).unwrap().bits, 2);
        assert_eq!(encode_real(3.5f64, &INT8).unwrap().bits, 4);
    }

    #[test]
    fn saturation_and_flush() {
        // FP8 max finite is 1.875 * 2^8 = 480 (the top exponent field is an
        // ordinary binade; no Inf/NaN codes exist).
        assert_eq!(encode_real(481.0f64, &FP8_E4M3).unwrap().bits, 0x7F);
        assert_eq!(encode_real(1e30f64, &FP8_E4M3).unwrap().bits, 0x7F);
        assert_eq!(encode_real(-1e30f64, &FP8_E4M3).unwrap().bits, 0xFF);
        assert_eq!(decode(&ScalarCode::new(FP8_E4M3, 0x7F)).to_f64(), 480.0);
        // FP8 min normal is 2^-6; anything smaller flushes to signed zero.
        assert_eq!(encode_real(2f64.powi(-7), &FP8_E4M3).unwrap().bits, 0x00);
        assert_eq!(encode_real(-2f64.powi(-7), &FP8_E4M3).unwrap().bits, 0x80);
        assert_eq!(encode_real(2f64.powi(-6), &FP8_E4M3).unwrap().bits, 0x08);
        // INT saturation clamps to the two's-complement extremes.
        assert_eq!(encode_real(300.0f64, &INT8).unwrap().bits, 0x7F);
        assert_eq!(encode_real(-300.0f64, &INT8).unwrap().bits, 0x80);
    }

    #[test]
    fn encode_real_rejects_non_finite() {
        assert!(encode_real(f64::NAN, &BF16).is_err());
        assert!(encode_real(f32::NEG_INFINITY, &BF16).is_err());
    }

    /// Round trip over canonical codes. Codes with a zero exponent field and
    /// a nonzero mantissa decode to zero under the flush policy, so they
    /// cannot round-trip; they must re-encode to the canonical signed zero.
    #[test]
    fn round_trip_exhaustive_small_formats() {
        for fmt in [FP8_E4M3, INT8, INT4, MXINT8] {
            let max = (1u32 << fmt.total_bits()) - 1;
            for bits in 0..=max {
                let code = ScalarCode::new(fmt, bits as u16);
                let back = encode_exact(&decode(&code), &fmt);
                if fmt.kind.is_fp_family() {
                    let m_bits = fmt.mantissa_bits as u32;
                    let field = (bits >> m_bits) & ((1 << fmt.exponent_bits) - 1);
                    if field == 0 {
                        let sign = code.bits & (1 << (fmt.total_bits() - 1));
                        assert_eq!(back.bits, sign, "flushed code {bits:#x} in {fmt:?}");
                        continue;
                    }
                }
                assert_eq!(back, code, "round trip failed for {bits:#x} in {fmt:?}");
            }
        }
    }

    #[test]
    fn round_trip_sampled_bf16() {
        // Deterministic stride covers all exponent fields and both signs.
        for i in 0..=0xFFFFu32 {
            let bits = (i.wrapping_mul(2654435761) >> 16) as u16 ^ (i as u16);
            let code = ScalarCode::new(BF16, bits);
            let v = decode(&code);
            let back = encode_exact(&v, &BF16);
            if v.is_zero() {
                let sign = code.bits & 0x8000;
                assert_eq!(back.bits, sign);
            } else {
                assert_eq!(back, code);
            }
        }
    }

    #[test]
    fn decode_is_strictly_monotonic_on_positive_canonical_codes() {
        for fmt in [FP8_E4M3, BF16, FP16] {
            let m_bits = fmt.mantissa_bits as u32;
            let top = ((1u32 << fmt.exponent_bits) - 1) << m_bits | ((1 << m_bits) - 1);
            let mut prev = ExactValue::zero(false);
            for bits in (1u32 << m_bits)..=top {
                let v = dec_bits(fmt, bits as u16);
                assert_eq!(
                    v.cmp_value(&prev),
                    std::cmp::Ordering::Greater,
                    "{fmt:?} not increasing at {bits:#x}"
                );
                prev = v;
            }
        }
    }

    /// The reported range must agree with an exhaustive decode of the code
    /// space (total decode, no reserved encodings).
    #[test]
    fn format_range_matches_exhaustive_decode() {
        for (_, fmt) in PRESETS.iter().filter(|(_, f)| f.total_bits() <= 8) {
            let (min_normal, max_finite) = format_range(fmt);
            let mut best_max = ExactValue::zero(false);
            let mut best_min: Option<ExactValue> = None;
            for bits in 0..(1u32 << fmt.total_bits()) {
                let v = dec_bits(*fmt, bits as u16);
                if v.is_negative() || v.is_zero() {
                    continue;
                }
                if v.cmp_magnitude(&best_max) == std::cmp::Ordering::Greater {
                    best_max = v.clone();
                }
                if best_min
                    .as_ref()
                    .map_or(true, |m| v.cmp_magnitude(m) == std::cmp::Ordering::Less)
                {
                    best_min = Some(v);
                }
            }
            assert_eq!(best_max, max_finite, "{fmt:?} max");
            // For FP kinds every positive code at or above the min normal is
            // normal, and smaller ones flushed to zero, so the smallest
            // surviving positive value is the min normal. Integer kinds have
            // no flushing and their smallest positive value is one grid step.
            assert_eq!(best_min.unwrap(), min_normal, "{fmt:?} min");
        }
        // bfloat16 extremes, checked against decodes of the extreme codes.
        let (min_normal, max_finite) = format_range(&BF16);
        assert_eq!(min_normal, dec_bits(BF16, 0x0080));
        assert_eq!(max_finite, dec_bits(BF16, 0x7FFF));
        assert_eq!(max_finite.floor_log2(), Some(128));
    }

    #[test]
    fn encode_saturation_never_exceeds_max_finite() {
        let (_, max_finite) = format_range(&FP8_E4M3);
        for x in [-1e9f64, -480.5, 479.9, 480.0, 480.1, 496.0, 1e9] {
            let code = encode_real(x, &FP8_E4M3).unwrap();
            let v = decode(&code);
            assert_ne!(
                v.cmp_magnitude(&max_finite),
                std::cmp::Ordering::Greater,
                "encode({x}) overflowed the format"
            );
        }
    }
}
