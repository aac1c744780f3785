//! Operand formats: descriptors, exact values, scalar codes and MX blocks.
//!
//! Every format the unit accepts is a [`FormatDescriptor`]. Plain formats
//! (INT, FP) encode one value per code; microscaling (MX) formats add a
//! signed 8-bit exponent shared by a block of 32 elements. Decoding is total
//! over the code space: there are no Inf/NaN encodings anywhere, and an
//! all-zero exponent field flushes to (signed) zero.

mod block;
mod exact;
mod scalar;

pub use block::{dequantize_block, quantize_block, BlockCode};
pub use exact::ExactValue;
pub use scalar::{decode, encode_exact, encode_real, format_range, ScalarCode};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, Result};

/// Arithmetic family of a format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatKind {
    /// Two's-complement integer.
    Int,
    /// Sign / exponent / mantissa mini-float with an implicit leading one.
    Fp,
    /// Integer elements under a shared block exponent.
    MxInt,
    /// Mini-float elements under a shared block exponent.
    MxFp,
}

impl FormatKind {
    pub fn is_mx(self) -> bool {
        matches!(self, FormatKind::MxInt | FormatKind::MxFp)
    }

    /// Element-level arithmetic is floating point (has an exponent field).
    pub fn is_fp_family(self) -> bool {
        matches!(self, FormatKind::Fp | FormatKind::MxFp)
    }
}

/// Bit-level description of an operand format.
///
/// `bias` is a pure function of the exponent width (IEEE-style
/// `2^(E-1) - 1`); it is carried in the JSON form for readability and
/// checked against the derived value when parsing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FormatDescriptor {
    pub kind: FormatKind,
    pub sign_bits: u8,
    pub exponent_bits: u8,
    pub mantissa_bits: u8,
    /// Width of the shared block exponent; 8 for MX kinds, 0 otherwise.
    pub shared_exponent_bits: u8,
    /// Elements per shared exponent; 1 for non-MX kinds.
    pub block_size: u16,
}

impl FormatDescriptor {
    pub const fn new_int(sign_bits: u8, mantissa_bits: u8) -> Self {
        FormatDescriptor {
            kind: FormatKind::Int,
            sign_bits,
            exponent_bits: 0,
            mantissa_bits,
            shared_exponent_bits: 0,
            block_size: 1,
        }
    }

    pub const fn new_fp(exponent_bits: u8, mantissa_bits: u8) -> Self {
        FormatDescriptor {
            kind: FormatKind::Fp,
            sign_bits: 1,
            exponent_bits,
            mantissa_bits,
            shared_exponent_bits: 0,
            block_size: 1,
        }
    }

    pub const fn new_mx_int(mantissa_bits: u8, block_size: u16) -> Self {
        FormatDescriptor {
            kind: FormatKind::MxInt,
            sign_bits: 1,
            exponent_bits: 0,
            mantissa_bits,
            shared_exponent_bits: 8,
            block_size,
        }
    }

    pub const fn new_mx_fp(exponent_bits: u8, mantissa_bits: u8, block_size: u16) -> Self {
        FormatDescriptor {
            kind: FormatKind::MxFp,
            sign_bits: 1,
            exponent_bits,
            mantissa_bits,
            shared_exponent_bits: 8,
            block_size,
        }
    }

    /// Exponent bias, `2^(E-1) - 1`. Zero for integer kinds.
    pub fn bias(&self) -> i64 {
        if self.exponent_bits == 0 {
            0
        } else {
            (1i64 << (self.exponent_bits - 1)) - 1
        }
    }

    /// Total encoded width of one element in bits.
    pub fn total_bits(&self) -> u32 {
        self.sign_bits as u32 + self.exponent_bits as u32 + self.mantissa_bits as u32
    }

    /// Mask covering the encoded element bits.
    pub fn code_mask(&self) -> u16 {
        let w = self.total_bits();
        if w >= 16 {
            0xFFFF
        } else {
            (1u16 << w) - 1
        }
    }

    /// Smallest unbiased exponent of a normal value (FP families).
    pub fn min_normal_exponent(&self) -> i64 {
        1 - self.bias()
    }

    /// Largest unbiased exponent. For FP families this is the top exponent
    /// field (all codes are finite, so the top field is an ordinary binade).
    /// For integer elements it is the position of the leading one of the
    /// largest magnitude: 0 for plain INT scaled in units, -1 for MXINT
    /// elements whose largest magnitude `(2^M - 1)/2^M` sits just below one.
    pub fn max_exponent(&self) -> i64 {
        match self.kind {
            FormatKind::Fp | FormatKind::MxFp => {
                ((1i64 << self.exponent_bits) - 1) - self.bias()
            }
            FormatKind::Int => self.mantissa_bits as i64 - 1,
            FormatKind::MxInt => -1,
        }
    }

    pub fn is_mx(&self) -> bool {
        self.kind.is_mx()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidDescriptor(msg));
        if self.sign_bits > 1 {
            return fail(format!("sign_bits must be 0 or 1, got {}", self.sign_bits));
        }
        if self.total_bits() == 0 || self.total_bits() > 16 {
            return fail(format!(
                "element width {} out of range 1..=16",
                self.total_bits()
            ));
        }
        match self.kind {
            FormatKind::Int | FormatKind::MxInt => {
                if self.exponent_bits != 0 {
                    return fail("integer kinds carry no exponent field".into());
                }
                if self.mantissa_bits == 0 {
                    return fail("integer kinds need at least one magnitude bit".into());
                }
            }
            FormatKind::Fp | FormatKind::MxFp => {
                if self.exponent_bits < 2 {
                    return fail("fp kinds need an exponent field of at least 2 bits".into());
                }
                if self.sign_bits != 1 {
                    return fail("fp kinds are signed".into());
                }
            }
        }
        if self.kind.is_mx() {
            if self.shared_exponent_bits != 8 {
                return fail("mx kinds use an 8-bit shared exponent".into());
            }
            if self.block_size < 2 {
                return fail("mx block size must be at least 2".into());
            }
            if self.sign_bits != 1 {
                return fail("mx elements are signed".into());
            }
        } else {
            if self.shared_exponent_bits != 0 {
                return fail("non-mx kinds have no shared exponent".into());
            }
            if self.block_size != 1 {
                return fail("non-mx kinds have block size 1".into());
            }
        }
        Ok(())
    }
}

/// Presets print their short names; ad-hoc descriptors fall back to a
/// structural `kind(s/e/m)` rendering.
impl std::fmt::Display for FormatDescriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if let Some(name) = preset_name(self) {
            return f.write_str(name);
        }
        write!(
            f,
            "{:?}({}/{}/{})",
            self.kind, self.sign_bits, self.exponent_bits, self.mantissa_bits
        )
    }
}

/// JSON wire form; carries the derived bias so reports are self-describing.
#[derive(Serialize, Deserialize)]
struct DescriptorRepr {
    kind: FormatKind,
    sign_bits: u8,
    exponent_bits: u8,
    mantissa_bits: u8,
    shared_exponent_bits: u8,
    block_size: u16,
    bias: i64,
}

impl Serialize for FormatDescriptor {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        DescriptorRepr {
            kind: self.kind,
            sign_bits: self.sign_bits,
            exponent_bits: self.exponent_bits,
            mantissa_bits: self.mantissa_bits,
            shared_exponent_bits: self.shared_exponent_bits,
            block_size: self.block_size,
            bias: self.bias(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FormatDescriptor {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = DescriptorRepr::deserialize(deserializer)?;
        let desc = FormatDescriptor {
            kind: repr.kind,
            sign_bits: repr.sign_bits,
            exponent_bits: repr.exponent_bits,
            mantissa_bits: repr.mantissa_bits,
            shared_exponent_bits: repr.shared_exponent_bits,
            block_size: repr.block_size,
        };
        desc.validate().map_err(serde::de::Error::custom)?;
        if repr.bias != desc.bias() {
            return Err(serde::de::Error::custom(format!(
                "bias {} does not match exponent width (expected {})",
                repr.bias,
                desc.bias()
            )));
        }
        Ok(desc)
    }
}

/// bfloat16: 1 sign, 8 exponent, 7 mantissa bits.
pub const BF16: FormatDescriptor = FormatDescriptor::new_fp(8, 7);
/// FP8 E4M3: 1 sign, 4 exponent, 3 mantissa bits.
pub const FP8_E4M3: FormatDescriptor = FormatDescriptor::new_fp(4, 3);
/// 8-bit two's-complement integer.
pub const INT8: FormatDescriptor = FormatDescriptor::new_int(1, 7);
/// 4-bit two's-complement integer.
pub const INT4: FormatDescriptor = FormatDescriptor::new_int(1, 3);
/// 8-bit integer elements sharing an 8-bit exponent per 32-element block.
pub const MXINT8: FormatDescriptor = FormatDescriptor::new_mx_int(7, 32);
/// 4-bit integer elements sharing an 8-bit exponent per 32-element block.
pub const MXINT4: FormatDescriptor = FormatDescriptor::new_mx_int(3, 32);
/// FP8 E4M3 elements sharing an 8-bit exponent per 32-element block.
pub const MXFP8_E4M3: FormatDescriptor = FormatDescriptor::new_mx_fp(4, 3, 32);

/// IEEE binary16 layout (1/5/10); the unit's FP output format.
pub const FP16: FormatDescriptor = FormatDescriptor::new_fp(5, 10);
/// 16-bit two's-complement integer; the unit's INT output format.
pub const INT16: FormatDescriptor = FormatDescriptor::new_int(1, 15);

/// Canonical quantisation presets addressable by name.
pub const PRESETS: [(&str, FormatDescriptor); 7] = [
    ("bf16", BF16),
    ("fp8_e4m3", FP8_E4M3),
    ("int8", INT8),
    ("int4", INT4),
    ("mxint8", MXINT8),
    ("mxint4", MXINT4),
    ("mxfp8_e4m3", MXFP8_E4M3),
];

/// Look up a canonical preset by name.
pub fn preset(name: &str) -> Result<FormatDescriptor> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, d)| *d)
        .ok_or_else(|| Error::UnknownPreset(name.to_string()))
}

/// Canonical name of a descriptor, if it is one of the presets or an
/// output format.
pub fn preset_name(desc: &FormatDescriptor) -> Option<&'static str> {
    for (n, d) in PRESETS.iter() {
        if d == desc {
            return Some(n);
        }
    }
    if *desc == FP16 {
        Some("fp16")
    } else if *desc == INT16 {
        Some("int16")
    } else {
        None
    }
}
