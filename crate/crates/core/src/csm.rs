//! The precision-scalable significand multiplier.
//!
//! One multiplier bank is built from four 4x4 sub-multipliers. In 8-bit
//! mode their sub-products fuse into a single 8x8 product; in 4-bit mode
//! each sub-multiplier delivers an independent lane product. Sub-products
//! are modeled at value granularity: each one is computed by shift-add
//! partial-product rows, not by a native multiply, so the fusion identity
//! is exercised the way the hardware composes it.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Per-operand signedness of a sub-multiplier.
///
/// The four combinations are exactly the supported behaviors: integer modes
/// run signed x signed, FP significand modes unsigned x unsigned, and the
/// mixed settings serve the cross terms of a signed 8-bit split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubMulConfig {
    pub a_signed: bool,
    pub b_signed: bool,
}

impl SubMulConfig {
    pub const UNSIGNED: SubMulConfig = SubMulConfig {
        a_signed: false,
        b_signed: false,
    };
    pub const SIGNED: SubMulConfig = SubMulConfig {
        a_signed: true,
        b_signed: true,
    };
}

fn nibble_value(n: u8, signed: bool) -> i32 {
    debug_assert!(n < 16);
    if signed && n >= 8 {
        n as i32 - 16
    } else {
        n as i32
    }
}

/// Inclusive product range of one sub-multiplier under a config.
fn submul_range(cfg: SubMulConfig) -> (i32, i32) {
    let (a_min, a_max) = if cfg.a_signed { (-8, 7) } else { (0, 15) };
    let (b_min, b_max) = if cfg.b_signed { (-8, 7) } else { (0, 15) };
    let corners = [a_min * b_min, a_min * b_max, a_max * b_min, a_max * b_max];
    (
        *corners.iter().min().unwrap(),
        *corners.iter().max().unwrap(),
    )
}

/// One 4x4 sub-multiplier: the product of two 4-bit patterns, each read as
/// unsigned or two's complement per `cfg`. Computed as four shift-add
/// partial-product rows with the top row negatively weighted when `b` is
/// signed. The result fits in 9 signed bits.
pub fn submul4(a: u8, b: u8, cfg: SubMulConfig) -> i32 {
    debug_assert!(a < 16 && b < 16, "operands must be 4-bit patterns");
    let row = nibble_value(a, cfg.a_signed);
    let mut acc = 0i32;
    for i in 0..4 {
        if (b >> i) & 1 == 1 {
            let weight = if cfg.b_signed && i == 3 { -8 } else { 1 << i };
            acc += row * weight;
        }
    }
    acc
}

/// Fuse the four sub-products of an 8x8 multiply split into 4-bit halves:
/// `phh * 2^8 + (phl + plh) * 2^4 + pll`. The split puts the operand sign
/// only on the high halves (`a = a_hi * 2^4 + a_lo` with `a_lo` unsigned),
/// so `cfg` names the signedness of the original 8-bit operands and each
/// sub-product must already carry the matching per-nibble interpretation.
pub fn fuse8x8(pll: i32, plh: i32, phl: i32, phh: i32, cfg: SubMulConfig) -> i32 {
    debug_assert!(
        in_range(pll, SubMulConfig::UNSIGNED)
            && in_range(
                plh,
                SubMulConfig {
                    a_signed: false,
                    b_signed: cfg.b_signed
                }
            )
            && in_range(
                phl,
                SubMulConfig {
                    a_signed: cfg.a_signed,
                    b_signed: false
                }
            )
            && in_range(phh, cfg),
        "sub-products out of range for {cfg:?}"
    );
    (phh << 8) + ((phl + plh) << 4) + pll
}

fn in_range(p: i32, cfg: SubMulConfig) -> bool {
    let (lo, hi) = submul_range(cfg);
    (lo..=hi).contains(&p)
}

/// An 8x8 multiply assembled from four sub-multipliers and one fusion.
pub fn mul8x8(a: u8, b: u8, cfg: SubMulConfig) -> i32 {
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
    fuse8x8(pll, plh, phl, phh, cfg)
}

/// Precision selector of one multiplier bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CsmMode {
    /// One fused 8x8 product.
    Wide8,
    /// Four independent 4x4 lane products, no fusion.
    Quad4,
}

/// Products delivered by one bank in one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsmProducts {
    Single(i32),
    Quad([i32; 4]),
}

/// Pack four 4-bit lane patterns into a bank operand, lane 0 in the low
/// nibble.
pub fn pack_nibbles(lanes: [u8; 4]) -> u16 {
    lanes
        .iter()
        .enumerate()
        .fold(0u16, |acc, (i, &n)| acc | (((n & 0xF) as u16) << (4 * i)))
}

/// Drive one bank for a cycle. `Wide8` consumes one 8-bit pattern per
/// operand (upper operand bits must be clear) and yields one product;
/// `Quad4` consumes four packed 4-bit lanes per operand and yields four.
pub fn csm_multiply(x: u16, w: u16, mode: CsmMode, cfg: SubMulConfig) -> CsmProducts {
    match mode {
        CsmMode::Wide8 => {
            debug_assert!(x <= 0xFF && w <= 0xFF, "8-bit mode operands");
            CsmProducts::Single(mul8x8(x as u8, w as u8, cfg))
        }
        CsmMode::Quad4 => {
            let lane = |v: u16, i: usize| ((v >> (4 * i)) & 0xF) as u8;
            CsmProducts::Quad([
                submul4(lane(x, 0), lane(w, 0), cfg),
                submul4(lane(x, 1), lane(w, 1), cfg),
                submul4(lane(x, 2), lane(w, 2), cfg),
                submul4(lane(x, 3), lane(w, 3), cfg),
            ])
        }
    }
}

/// How sub-multipliers share alignment shifters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Grouping {
    /// Every lane path keeps a private shifter (the reference structure).
    Ungrouped,
    /// Sub-multipliers are regrouped across banks so the four lanes that
    /// share shift parameters share one shifter.
    #[serde(rename = "GROUPED_2D")]
    Grouped2d,
}

/// Structural accounting of one unit's multiplier array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsmStructure {
    pub sub_multiplier_count: u32,
    pub shifter_count: u32,
    pub grouping: Grouping,
}

/// Count the sub-multiplier and barrel-shifter instances a unit needs for a
/// lane configuration (4 wide lanes or 16 narrow ones) under a grouping.
/// The sixteen sub-multipliers are always present; 2D grouping shares each
/// shifter across four lanes, cutting the shifter count by 75%.
pub fn structure_report(grouping: Grouping, lanes: u32) -> Result<CsmStructure> {
    if lanes != 4 && lanes != 16 {
        return Err(Error::InvalidLanes(lanes));
    }
    let shifter_count = match grouping {
        Grouping::Ungrouped => lanes,
        Grouping::Grouped2d => lanes / 4,
    };
    Ok(CsmStructure {
        sub_multiplier_count: 16,
        shifter_count,
        grouping,
    })
}
