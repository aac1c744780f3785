use serde::{Deserialize, Serialize};

use super::exact::ExactValue;
use super::scalar::{decode, encode_exact, ScalarCode};
use super::{FormatDescriptor, FormatKind};
use crate::{Error, Result};

/// A block of elements sharing one power-of-two exponent.
///
/// Every element value is `decode(element) * 2^shared_exponent`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockCode {
    pub format: FormatDescriptor,
    pub shared_exponent: i8,
    pub elements: Vec<ScalarCode>,
}

/// Quantize one block of exact values into a shared-exponent code.
///
/// The shared exponent places the block maximum in the top binade of the
/// element format: `e_x = floor(log2 max|v|) - e_top`, clamped to the i8
/// range, with `-128` for an all-zero block. Elements are then encoded at
/// that scale with round-to-nearest-even and symmetric saturation, so a
/// quantized block re-quantizes to itself bit for bit.
pub fn quantize_block(values: &[ExactValue], fmt: &FormatDescriptor) -> Result<BlockCode> {
    if !fmt.kind.is_mx() {
        return Err(Error::FormatMismatch {
            expected: "a block-scaled format".into(),
            got: format!("{:?}", fmt.kind),
        });
    }
    if values.len() != fmt.block_size as usize {
        return Err(Error::BlockLength {
            expected: fmt.block_size as usize,
            got: values.len(),
        });
    }
    let max = values
        .iter()
        .max_by(|a, b| a.cmp_magnitude(b))
        .expect("block is non-empty");
    let shared_exponent = match max.floor_log2() {
        None => -128i8,
        Some(k) => (k - fmt.max_exponent()).clamp(-128, 127) as i8,
    };
    let elements = values
        .iter()
        .map(|v| {
            let mut code = encode_exact(&v.scale_pow2(-(shared_exponent as i64)), fmt);
            if fmt.kind == FormatKind::MxInt {
                // Saturate symmetrically. The most negative two's-complement
                // code (-2^M, value -1.0 at scale) stays decodable, but the
                // quantizer never emits it: a -1.0 element would move the
                // derived shared exponent up by one on the next pass and
                // re-grid every odd neighbor.
                let min_allowed = -((1i32 << fmt.mantissa_bits) - 1);
                if code.as_int() < min_allowed {
                    code = ScalarCode::new(*fmt, min_allowed as u16);
                }
            }
            code
        })
        .collect();
    Ok(BlockCode {
        format: *fmt,
        shared_exponent,
        elements,
    })
}

/// Expand a block back to exact element values.
pub fn dequantize_block(block: &BlockCode) -> Vec<ExactValue> {
    block
        .elements
        .iter()
        .map(|c| decode(c).scale_pow2(block.shared_exponent as i64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::{MXFP8_E4M3, MXINT4, MXINT8};
    use super::*;

    fn block_of(reals: &[f64], fmt: &FormatDescriptor) -> BlockCode {
        let mut vals: Vec<ExactValue> = reals
            .iter()
            .map(|&x| ExactValue::from_float(x).unwrap())
            .collect();
        vals.resize(fmt.block_size as usize, ExactValue::zero(false));
        quantize_block(&vals, fmt).unwrap()
    }

    #[test]
    fn shared_exponent_places_max_in_top_binade() {
        // MXINT: e_top = -1, so max 3.0 (floor log2 = 1) gives e_x = 2 and
        // the element grid step 4/128.
        let b = block_of(&[3.0, 1.0, -0.25], &MXINT8);
        assert_eq!(b.shared_exponent, 2);
        assert_eq!(b.elements[0].as_int(), 96);
        assert_eq!(b.elements[1].as_int(), 32);
        assert_eq!(b.elements[2].as_int(), -8);
        // MXFP8: e_top = 8, so max 448 = 1.75 * 2^8 gives e_x = 0 and the
        // element encodes as plain FP8.
        let b = block_of(&[448.0, 1.0], &MXFP8_E4M3);
        assert_eq!(b.shared_exponent, 0);
        assert_eq!(b.elements[0].bits, 0x7E);
        assert_eq!(b.elements[1].bits, 0x38);
        let b = block_of(&[2.0], &MXFP8_E4M3);
        assert_eq!(b.shared_exponent, -7);
        assert_eq!(b.elements[0].bits, 0x78);
    }

    #[test]
    fn all_zero_block_uses_floor_exponent() {
        let b = block_of(&[0.0, -0.0], &MXINT8);
        assert_eq!(b.shared_exponent, -128);
        assert!(b.elements.iter().all(|c| c.bits == 0));
        assert!(dequantize_block(&b).iter().all(|v| v.is_zero()));
    }

    #[test]
    fn exact_grid_values_round_trip() {
        let b = block_of(&[0.5, -0.5, 0.25, 0.375], &MXINT8);
        assert_eq!(b.shared_exponent, 0);
        assert_eq!(b.elements[0].as_int(), 64);
        let back = dequantize_block(&b);
        assert_eq!(back[0], ExactValue::from_float(0.5f64).unwrap());
        assert_eq!(back[1], ExactValue::from_float(-0.5f64).unwrap());
        assert_eq!(back[3], ExactValue::from_float(0.375f64).unwrap());
    }

    #[test]
    fn rejects_wrong_shapes() {
        let vals = vec![ExactValue::from_int(1); 31];
        assert!(quantize_block(&vals, &MXINT8).is_err());
        let vals = vec![ExactValue::from_int(1); 32];
        assert!(quantize_block(&vals, &super::super::INT8).is_err());
    }

    /// Quantizing a dequantized block must reproduce it exactly: the block
    /// maximum stays in the top binade, so the derived shared exponent is
    /// stable and every element is already on its grid.
    #[test]
    fn quantize_is_idempotent() {
        let mut state = 0x2545F4914F6CDD1Du64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            state
        };
        for fmt in [MXINT8, MXINT4, MXFP8_E4M3] {
            for _ in 0..400 {
                let vals: Vec<ExactValue> = (0..fmt.block_size)
                    .map(|_| {
                        let r = next();
                        let mag = ((r & 0xFFFFF) as f64 / 0xFFFFF as f64 - 0.5) * 8.0;
                        let scale = ((r >> 24) % 17) as i32 - 8;
                        ExactValue::from_float(mag * 2f64.powi(scale)).unwrap()
                    })
                    .collect();
                let b1 = quantize_block(&vals, &fmt).unwrap();
                let b2 = quantize_block(&dequantize_block(&b1), &fmt).unwrap();
                assert_eq!(b1, b2, "requantization moved a {fmt:?} block");
            }
        }
        // Values a hair under a power of two land in the saturation sliver;
        // idempotence must survive the symmetric clamp on both signs.
        for edge in [1.0 - 2f64.powi(-10), -(1.0 - 2f64.powi(-10))] {
            let b1 = block_of(&[edge, 0.3, -0.7], &MXINT8);
            let max_mag = (1 << 7) - 1;
            assert!(b1.elements[0].as_int().abs() <= max_mag);
            let b2 = quantize_block(&dequantize_block(&b1), &MXINT8).unwrap();
            assert_eq!(b1, b2);
        }
    }

    /// Round-trip error is below one grid step everywhere, and below half a
    /// step for elements clear of the saturation boundary.
    #[test]
    fn quantization_error_is_bounded() {
        let mut state = 0x9E3779B97F4A7C15u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            state
        };
        for fmt in [MXINT8, MXINT4, MXFP8_E4M3] {
            let m = fmt.mantissa_bits as i32;
            for _ in 0..200 {
                let vals: Vec<f64> = (0..fmt.block_size)
                    .map(|_| {
                        let r = next();
                        ((r & 0xFFFFFF) as f64 / 0xFFFFFF as f64 - 0.5) * 6.0
                    })
                    .collect();
                let exact: Vec<ExactValue> = vals
                    .iter()
                    .map(|&x| ExactValue::from_float(x).unwrap())
                    .collect();
                let b = quantize_block(&exact, &fmt).unwrap();
                let back = dequantize_block(&b);
                let e_x = b.shared_exponent as i32;
                // One step of the element grid, at the top binade for FP.
                let step = 2f64.powi(e_x + fmt.max_exponent() as i32 - m);
                for (i, (&v, q)) in vals.iter().zip(&back).enumerate() {
                    let err = (q.to_f64() - v).abs();
                    assert!(
                        err <= step,
                        "{fmt:?} element {i}: |{} - {v}| = {err} > step {step}",
                        q.to_f64()
                    );
                }
                // Integer grids: strictly inside the clamp boundary the error
                // obeys the ordinary half-step nearest-rounding bound.
                if fmt.kind == FormatKind::MxInt {
                    let half = 2f64.powi(e_x - m - 1);
                    let boundary = ((1 << m) as f64 - 0.5) * 2f64.powi(e_x - m);
                    for (&v, q) in vals.iter().zip(&back) {
                        if v.abs() < boundary {
                            assert!((q.to_f64() - v).abs() <= half);
                        }
                    }
                }
            }
        }
    }
}
