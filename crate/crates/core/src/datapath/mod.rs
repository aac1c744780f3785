//! The unit datapath: one integer pipeline serving every operand format.
//!
//! A MAC runs in one of seven modes. Wide modes (bfloat16, INT8, MXINT8)
//! occupy 4 lanes of fused 8x8 products; narrow modes (FP8, INT4, MXINT4,
//! MXFP8) occupy 16 lanes of independent 4x4 products. FP-family lanes
//! split each operand into sign, exponent field and significand, multiply
//! significands in the integer multiplier bank, align exactly against the
//! largest exponent and truncate once at the very end; integer lanes run
//! straight through the multipliers into the saturating output port.
//!
//! [`jack_mac`] models the shifter-sharing (grouped) structure; the
//! ungrouped [`jack_mac_reference`] aligns every sub-product through its
//! own shifter. The two must agree bit for bit on every input — the
//! grouped form exists to cut shifter instances, not to change values.

mod stages;

pub use stages::{
    align_and_accumulate, exponent_extract, normalize, round_output, xor_bundle, AlignmentSet,
    NormFlag, Normalized, ProductTerm, RounderInput, E_MAX_FLOOR,
};

use num_bigint::BigInt;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::csm::{fuse8x8, submul4, SubMulConfig};
use crate::formats::{
    preset_name, BlockCode, FormatDescriptor, FormatKind, ScalarCode, BF16, FP16, FP8_E4M3, INT16,
    INT4, INT8, MXFP8_E4M3, MXINT4, MXINT8,
};
use crate::{Error, Result};

/// The seven operating modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    Bf16,
    Fp8,
    Int8,
    Int4,
    MxInt8,
    MxInt4,
    MxFp8,
}

impl ModeName {
    pub const ALL: [ModeName; 7] = [
        ModeName::Bf16,
        ModeName::Fp8,
        ModeName::Int8,
        ModeName::Int4,
        ModeName::MxInt8,
        ModeName::MxInt4,
        ModeName::MxFp8,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ModeName::Bf16 => "bf16",
            ModeName::Fp8 => "fp8",
            ModeName::Int8 => "int8",
            ModeName::Int4 => "int4",
            ModeName::MxInt8 => "mxint8",
            ModeName::MxInt4 => "mxint4",
            ModeName::MxFp8 => "mxfp8",
        }
    }
}

impl std::fmt::Display for ModeName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModeName {
    type Err = Error;

    fn from_str(s: &str) -> Result<ModeName> {
        ModeName::ALL
            .iter()
            .find(|m| m.as_str() == s)
            .copied()
            .ok_or_else(|| Error::UnknownMode(s.to_string()))
    }
}

/// The 16-bit output port a mode drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum OutputFormat {
    Fp16,
    Int16,
}

impl OutputFormat {
    /// The scalar format carried on this port.
    pub fn descriptor(&self) -> FormatDescriptor {
        match self {
            OutputFormat::Fp16 => FP16,
            OutputFormat::Int16 => INT16,
        }
    }
}

/// One operating configuration of the unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mode {
    pub name: ModeName,
    pub lanes: u32,
    pub element_format: FormatDescriptor,
    pub output_format: OutputFormat,
}

impl Mode {
    pub fn from_name(name: ModeName) -> Mode {
        let (element_format, lanes, output_format) = match name {
            ModeName::Bf16 => (BF16, 4, OutputFormat::Fp16),
            ModeName::Fp8 => (FP8_E4M3, 16, OutputFormat::Fp16),
            ModeName::Int8 => (INT8, 4, OutputFormat::Int16),
            ModeName::Int4 => (INT4, 16, OutputFormat::Int16),
            ModeName::MxInt8 => (MXINT8, 4, OutputFormat::Fp16),
            ModeName::MxInt4 => (MXINT4, 16, OutputFormat::Fp16),
            ModeName::MxFp8 => (MXFP8_E4M3, 16, OutputFormat::Fp16),
        };
        Mode {
            name,
            lanes,
            element_format,
            output_format,
        }
    }

    pub fn all() -> [Mode; 7] {
        ModeName::ALL.map(Mode::from_name)
    }

    /// Bits of one lane significand entering the multiplier bank: the
    /// mantissa with its implicit one for FP families, the full
    /// two's-complement element for integer families.
    pub fn significand_width(&self) -> u32 {
        match self.element_format.kind {
            FormatKind::Fp | FormatKind::MxFp => 1 + self.element_format.mantissa_bits as u32,
            FormatKind::Int | FormatKind::MxInt => self.element_format.total_bits(),
        }
    }

    /// Fraction convention `F`: a term of value `sig * 2^(e - F)`. Lane
    /// products carry twice the element mantissa width; integer modes run
    /// on the unit grid.
    pub fn frac_bits(&self) -> u32 {
        match self.output_format {
            OutputFormat::Int16 => 0,
            OutputFormat::Fp16 => 2 * self.element_format.mantissa_bits as u32,
        }
    }

    /// Inclusive bounds of the effective exponent any term can carry,
    /// including the injected 16-bit partial sum re-gridded to `F`.
    fn exponent_bounds(&self) -> (i64, i64) {
        let f = &self.element_format;
        // Two shared i8 exponents add at most [-256, 254].
        let (mut lo, mut hi) = match f.kind {
            FormatKind::Fp => (2 * f.min_normal_exponent(), 2 * f.max_exponent()),
            FormatKind::MxFp => (2 * f.min_normal_exponent() - 256, 2 * f.max_exponent() + 254),
            FormatKind::MxInt => (-256, 254),
            FormatKind::Int => (0, 0),
        };
        if self.output_format == OutputFormat::Fp16 {
            let d = (self.frac_bits() as i64 - 10).min(0);
            lo = lo.min(FP16.min_normal_exponent() + d);
            hi = hi.max(FP16.max_exponent() + d);
        }
        (lo, hi)
    }

    /// Largest alignment shift any input can demand in this mode; the
    /// physical barrel-shifter span.
    pub fn max_alignment_shift(&self) -> u32 {
        let (lo, hi) = self.exponent_bounds();
        (hi - lo) as u32
    }

    /// Adder-tree width guaranteeing exact alignment for `terms` inputs:
    /// widest term, plus the full shift span, plus carry headroom.
    pub fn accumulator_width(&self, terms: usize) -> u32 {
        let lane_bits = 2 * self.significand_width();
        let acc_bits = match self.output_format {
            OutputFormat::Int16 => 16,
            OutputFormat::Fp16 => 11 + (self.frac_bits() as i64 - 10).max(0) as u32,
        };
        let headroom = usize::BITS - terms.leading_zeros();
        lane_bits.max(acc_bits) + self.max_alignment_shift() + headroom + 1
    }
}

/// Which submodules a mode powers on. Everything outside this set is
/// gated off for the mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveSubmodules {
    pub csm: bool,
    pub xor_bundle: bool,
    /// Per-lane exponent calculators in use: all lanes for FP families,
    /// one for the whole block in MXINT modes, none for plain integers.
    pub exponent_calculators: u32,
    pub normalizer: bool,
    pub rounder: bool,
}

/// The activation set of a mode: integer modes drive the multiplier bank
/// straight to the output port; MXINT wakes a single exponent calculator
/// for the shared block exponent; FP families power everything.
pub fn mode_activation(mode: &Mode) -> ActiveSubmodules {
    match mode.name {
        ModeName::Bf16 | ModeName::Fp8 | ModeName::MxFp8 => ActiveSubmodules {
            csm: true,
            xor_bundle: true,
            exponent_calculators: mode.lanes,
            normalizer: true,
            rounder: true,
        },
        ModeName::Int8 | ModeName::Int4 => ActiveSubmodules {
            csm: true,
            xor_bundle: false,
            exponent_calculators: 0,
            normalizer: false,
            rounder: false,
        },
        ModeName::MxInt8 | ModeName::MxInt4 => ActiveSubmodules {
            csm: true,
            xor_bundle: false,
            exponent_calculators: 1,
            normalizer: true,
            rounder: true,
        },
    }
}

/// One operand vector: plain lanes, or a window of a shared-exponent block.
#[derive(Debug, Clone, PartialEq)]
pub enum MacOperand {
    Scalars(Vec<ScalarCode>),
    Block(BlockCode),
}

impl MacOperand {
    /// A lane-sized window of a quantized block, keeping its shared
    /// exponent.
    pub fn block_slice(block: &BlockCode, start: usize, len: usize) -> MacOperand {
        MacOperand::Block(BlockCode {
            format: block.format,
            shared_exponent: block.shared_exponent,
            elements: block.elements[start..start + len].to_vec(),
        })
    }
}

impl From<BlockCode> for MacOperand {
    fn from(block: BlockCode) -> MacOperand {
        MacOperand::Block(block)
    }
}

/// Full result of one MAC invocation, with alignment diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct JackResult {
    /// The 16-bit output code (FP16 or INT16 per the mode).
    pub output: ScalarCode,
    /// Reference exponent the lanes aligned to ([`E_MAX_FLOOR`] if all
    /// terms were zero).
    pub e_max: i64,
    /// Largest alignment shift applied; the raw accumulator's value is
    /// `raw_accumulator * 2^(e_max - alignment_cap - F)`.
    pub alignment_cap: u32,
    /// The exact adder-tree output, before normalization and truncation.
    pub raw_accumulator: BigInt,
    pub active_submodules: ActiveSubmodules,
}

impl JackResult {
    /// Diagnostic dump; the wide accumulator rides as a decimal string.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "output": self.output,
            "e_max": if self.e_max == E_MAX_FLOOR { serde_json::Value::Null } else { self.e_max.into() },
            "alignment_cap": self.alignment_cap,
            "raw_accumulator": self.raw_accumulator.to_string(),
            "active_submodules": self.active_submodules,
        })
    }
}

/// Sign, exponent field and significand of one FP-family element, straight
/// from the wire bits. A zero exponent field flushes the significand.
struct FpFields {
    sign: bool,
    e_field: u32,
    sig: u16,
}

fn fp_fields(bits: u16, fmt: &FormatDescriptor) -> FpFields {
    let m = fmt.mantissa_bits as u32;
    let e_bits = fmt.exponent_bits as u32;
    let e_field = ((bits >> m) as u32) & ((1u32 << e_bits) - 1);
    let sign = (bits >> (e_bits + m)) & 1 == 1;
    let sig = if e_field == 0 {
        0
    } else {
        (1u16 << m) | (bits & ((1u16 << m) - 1))
    };
    FpFields { sign, e_field, sig }
}

/// One lane's product, both fused (one shift) and as raw sub-products
/// (one shift each) for the ungrouped structure.
struct Lane {
    term: ProductTerm,
    /// Signed sub-product values with their bit weights inside the lane.
    subs: Vec<(i64, u32)>,
}

/// Four sub-products of an 8x8 multiply with their bit weights, plus the
/// fused product the grouped structure forms before its single shift.
fn split8x8(a: u8, b: u8, cfg: SubMulConfig) -> ([(i32, u32); 4], i32) {
    let (a_lo, a_hi) = (a & 0xF, a >> 4);
    let (b_lo, b_hi) = (b & 0xF, b >> 4);
    let pll = submul4(a_lo, b_lo, SubMulConfig::UNSIGNED);
    let plh = submul4(
        a_lo,
        b_hi,
        SubMulConfig {
            a_signed: false,
            b_signed: cfg.b_signed,
        },
    );
    let phl = submul4(
        a_hi,
        b_lo,
        SubMulConfig {
            a_signed: cfg.a_signed,
            b_signed: false,
        },
    );
    let phh = submul4(a_hi, b_hi, cfg);
    let fused = fuse8x8(pll, plh, phl, phh, cfg);
    ([(pll, 0), (plh, 4), (phl, 4), (phh, 8)], fused)
}

fn build_lanes(mode: &Mode, xb: &[u16], wb: &[u16], shared_exp_sum: i64) -> Result<Vec<Lane>> {
    let fmt = &mode.element_format;
    match fmt.kind {
        FormatKind::Fp | FormatKind::MxFp => {
            let xf: Vec<FpFields> = xb.iter().map(|&b| fp_fields(b, fmt)).collect();
            let wf: Vec<FpFields> = wb.iter().map(|&b| fp_fields(b, fmt)).collect();
            let signs = xor_bundle(
                &xf.iter().map(|f| f.sign).collect::<Vec<_>>(),
                &wf.iter().map(|f| f.sign).collect::<Vec<_>>(),
            )?;
            let bias2 = 2 * fmt.bias();
            Ok(xf
                .iter()
                .zip(&wf)
                .zip(signs)
                .map(|((x, w), sign)| {
                    if x.sig == 0 || w.sig == 0 {
                        return Lane {
                            term: ProductTerm::zero(),
                            subs: Vec::new(),
                        };
                    }
                    let exponent = x.e_field as i64 + w.e_field as i64 - bias2;
                    if mode.lanes == 4 {
                        let (subs, fused) =
                            split8x8(x.sig as u8, w.sig as u8, SubMulConfig::UNSIGNED);
                        Lane {
                            term: ProductTerm::new(sign, exponent, fused as u32),
                            subs: subs
                                .iter()
                                .map(|&(v, wt)| (sign as i64 * v as i64, wt))
                                .collect(),
                        }
                    } else {
                        let p = submul4(x.sig as u8, w.sig as u8, SubMulConfig::UNSIGNED);
                        Lane {
                            term: ProductTerm::new(sign, exponent, p as u32),
                            subs: vec![(sign as i64 * p as i64, 0)],
                        }
                    }
                })
                .collect())
        }
        FormatKind::Int | FormatKind::MxInt => {
            let exponent = if fmt.kind == FormatKind::MxInt {
                shared_exp_sum
            } else {
                0
            };
            Ok(xb
                .iter()
                .zip(wb)
                .map(|(&a, &b)| {
                    if mode.lanes == 4 {
                        let (subs, fused) = split8x8(a as u8, b as u8, SubMulConfig::SIGNED);
                        Lane {
                            term: ProductTerm::from_signed(fused as i64, exponent),
                            subs: subs.iter().map(|&(v, wt)| (v as i64, wt)).collect(),
                        }
                    } else {
                        let p = submul4(a as u8, b as u8, SubMulConfig::SIGNED);
                        Lane {
                            term: ProductTerm::from_signed(p as i64, exponent),
                            subs: vec![(p as i64, 0)],
                        }
                    }
                })
                .collect())
        }
    }
}

fn check_formats(mode: &Mode, codes: &[ScalarCode]) -> Result<()> {
    for c in codes {
        if c.format != mode.element_format {
            return Err(Error::FormatMismatch {
                expected: preset_name(&mode.element_format)
                    .unwrap_or("the mode's element format")
                    .into(),
                got: preset_name(&c.format).unwrap_or("a foreign format").into(),
            });
        }
    }
    Ok(())
}

/// Raw lane bits and the operand's shared exponent (0 for plain formats).
/// Block windows shorter than the lane count are padded with zero codes.
fn operand_lanes(mode: &Mode, op: &MacOperand) -> Result<(Vec<u16>, i64)> {
    let lanes = mode.lanes as usize;
    match op {
        MacOperand::Scalars(codes) => {
            if mode.element_format.is_mx() {
                return Err(Error::ModeInput {
                    mode: mode.name.to_string(),
                    problem: "expects a block operand carrying a shared exponent".into(),
                });
            }
            if codes.len() != lanes {
                return Err(Error::LaneMismatch {
                    expected: lanes,
                    got: codes.len(),
                });
            }
            check_formats(mode, codes)?;
            Ok((codes.iter().map(|c| c.bits).collect(), 0))
        }
        MacOperand::Block(block) => {
            if !mode.element_format.is_mx() {
                return Err(Error::ModeInput {
                    mode: mode.name.to_string(),
                    problem: "takes plain lane operands, not a block".into(),
                });
            }
            if block.format != mode.element_format {
                return Err(Error::FormatMismatch {
                    expected: preset_name(&mode.element_format).unwrap_or("mode format").into(),
                    got: preset_name(&block.format).unwrap_or("a foreign format").into(),
                });
            }
            if block.elements.len() > lanes {
                return Err(Error::LaneMismatch {
                    expected: lanes,
                    got: block.elements.len(),
                });
            }
            check_formats(mode, &block.elements)?;
            let mut bits: Vec<u16> = block.elements.iter().map(|c| c.bits).collect();
            bits.resize(lanes, 0);
            Ok((bits, block.shared_exponent as i64))
        }
    }
}

/// The injected 16-bit partial sum as one extra adder-tree term, re-gridded
/// to the mode's fraction convention. In MXFP mode the extractor later adds
/// the shared bias to every term, so the partial sum enters pre-compensated.
fn acc_term(mode: &Mode, code: &ScalarCode, bias_add: i64) -> Result<ProductTerm> {
    match mode.output_format {
        OutputFormat::Int16 => {
            if code.format != INT16 {
                return Err(Error::FormatMismatch {
                    expected: "int16".into(),
                    got: preset_name(&code.format).unwrap_or("a foreign format").into(),
                });
            }
            Ok(ProductTerm::from_signed(code.as_int() as i64, 0))
        }
        OutputFormat::Fp16 => {
            if code.format != FP16 {
                return Err(Error::FormatMismatch {
                    expected: "fp16".into(),
                    got: preset_name(&code.format).unwrap_or("a foreign format").into(),
                });
            }
            let f = fp_fields(code.bits, &FP16);
            if f.sig == 0 {
                return Ok(ProductTerm::zero());
            }
            let e_acc = f.e_field as i64 - FP16.bias();
            let d = mode.frac_bits() as i64 - 10;
            let (sig, e) = if d >= 0 {
                ((f.sig as u32) << d, e_acc)
            } else {
                (f.sig as u32, e_acc + d)
            };
            Ok(ProductTerm::new(
                if f.sign { -1 } else { 1 },
                e - bias_add,
                sig,
            ))
        }
    }
}

fn run_mac(
    mode: &Mode,
    x: &MacOperand,
    w: &MacOperand,
    acc_in: Option<ScalarCode>,
    grouped: bool,
) -> Result<JackResult> {
    if let (MacOperand::Block(a), MacOperand::Block(b)) = (x, w) {
        if a.elements.len() != b.elements.len() {
            return Err(Error::OperandLength {
                x: a.elements.len(),
                w: b.elements.len(),
            });
        }
    }
    let (xb, ex) = operand_lanes(mode, x)?;
    let (wb, ey) = operand_lanes(mode, w)?;
    let shared_sum = ex + ey;
    // MXFP lanes keep element exponents and receive the shared sum through
    // the extractor's bias input; MXINT folds it into the single block
    // exponent every lane shares.
    let (lane_shared, bias_add) = match mode.element_format.kind {
        FormatKind::MxInt => (shared_sum, 0),
        FormatKind::MxFp => (0, shared_sum),
        _ => (0, 0),
    };
    let lanes = build_lanes(mode, &xb, &wb, lane_shared)?;
    let mut terms: Vec<ProductTerm> = lanes.iter().map(|l| l.term).collect();
    if let Some(code) = acc_in {
        terms.push(acc_term(mode, &code, bias_add)?);
    }
    let alignment = exponent_extract(&terms, mode, bias_add);
    let cap = alignment.cap();
    let raw = if grouped {
        align_and_accumulate(&terms, &alignment)
    } else {
        let mut acc = BigInt::zero();
        for (lane, &shift) in lanes.iter().zip(&alignment.shifts) {
            if lane.term.is_zero {
                continue;
            }
            for &(sub, weight) in &lane.subs {
                if sub != 0 {
                    acc += BigInt::from(sub) << (cap - shift + weight) as u64;
                }
            }
        }
        if terms.len() > lanes.len() {
            // The injected partial sum rides its own single alignment path.
            let t = &terms[lanes.len()];
            if !t.is_zero {
                let mut v =
                    BigInt::from(t.significand) << (cap - alignment.shifts[lanes.len()]) as u64;
                if t.sign < 0 {
                    v = -v;
                }
                acc += v;
            }
        }
        acc
    };
    let output = match mode.output_format {
        OutputFormat::Int16 => round_output(RounderInput::Integer(&raw), mode),
        OutputFormat::Fp16 => {
            let n = normalize(&raw, alignment.e_max, cap, mode.frac_bits());
            round_output(RounderInput::Normalized(&n), mode)
        }
    };
    Ok(JackResult {
        output,
        e_max: alignment.e_max,
        alignment_cap: cap,
        raw_accumulator: raw,
        active_submodules: mode_activation(mode),
    })
}

/// One multiply-accumulate through the grouped (shifter-sharing) datapath:
/// lane significands multiply in the integer bank, 8-bit lanes fuse their
/// four sub-products, each lane takes a single exact alignment shift, and
/// the 16-bit output is cut once at the very end. FP-family outputs are
/// therefore bit-identical to the exact dot product of the decoded inputs
/// truncated once to FP16; integer outputs are the exact dot product
/// saturated to INT16.
pub fn jack_mac(
    mode: &Mode,
    x: &MacOperand,
    w: &MacOperand,
    acc_in: Option<ScalarCode>,
) -> Result<JackResult> {
    run_mac(mode, x, w, acc_in, true)
}

/// The ungrouped baseline: identical contract to [`jack_mac`], computed by
/// shifting every sub-product through its own shifter with no fusion. It
/// exists as the equivalence reference for the grouped structure.
pub fn jack_mac_reference(
    mode: &Mode,
    x: &MacOperand,
    w: &MacOperand,
    acc_in: Option<ScalarCode>,
) -> Result<JackResult> {
    run_mac(mode, x, w, acc_in, false)
}
