//! Array configurations and the two stock presets.

use jackmac::datapath::Mode;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// The MAC unit a configuration is built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum UnitKind {
    /// The multi-format unit modeled by this crate: every mode, 8-wire
    /// pipelined input links.
    Jack,
    /// A conventional fixed-function array: bf16/fp8/int8/int4 only,
    /// full-width input links, one (8-bit) or four (4-bit) multipliers
    /// per unit.
    Baseline,
}

impl UnitKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            UnitKind::Jack => "JACK",
            UnitKind::Baseline => "BASELINE",
        }
    }
}

/// A systolic array of MAC units plus its memory system.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayConfig {
    pub rows: u32,
    pub cols: u32,
    pub unit: UnitKind,
    /// Wires per operand link; operands wider than this stream over
    /// several cycles.
    pub input_link_bits: u32,
    pub ibuf_kb: u32,
    pub wbuf_kb: u32,
    pub obuf_kb: u32,
    pub bandwidth_bytes_per_cycle: u32,
    /// Informational only; cycle counts never depend on it.
    pub clock_mhz: u32,
}

impl ArrayConfig {
    /// The stock 32x32 array of multi-format units: effectively 128x128
    /// multipliers in 8-bit-significand modes and 512x512 in 4-bit modes.
    pub fn jack() -> Self {
        ArrayConfig {
            rows: 32,
            cols: 32,
            unit: UnitKind::Jack,
            input_link_bits: 8,
            ibuf_kb: 512,
            wbuf_kb: 512,
            obuf_kb: 256,
            bandwidth_bytes_per_cycle: 1024,
            clock_mhz: 400,
        }
    }

    /// The conventional 128x128 array with the same effective multiplier
    /// counts in the modes it supports.
    pub fn baseline() -> Self {
        ArrayConfig {
            rows: 128,
            cols: 128,
            unit: UnitKind::Baseline,
            input_link_bits: 16,
            ibuf_kb: 512,
            wbuf_kb: 512,
            obuf_kb: 256,
            bandwidth_bytes_per_cycle: 1024,
            clock_mhz: 400,
        }
    }

    /// Look up a preset by name (case-insensitive).
    pub fn preset(name: &str) -> Result<Self> {
        match name.to_ascii_uppercase().as_str() {
            "JACK" => Ok(ArrayConfig::jack()),
            "BASELINE" => Ok(ArrayConfig::baseline()),
            _ => Err(SimError::Config(format!(
                "unknown preset `{name}` (expected JACK or BASELINE)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rows", self.rows),
            ("cols", self.cols),
            ("input_link_bits", self.input_link_bits),
            ("bandwidth_bytes_per_cycle", self.bandwidth_bytes_per_cycle),
        ] {
            if v == 0 {
                return Err(SimError::Config(format!("{name} must be at least 1")));
            }
        }
        Ok(())
    }

    /// Whether this array can run `mode` at all.
    pub fn supports(&self, mode: &Mode) -> bool {
        match self.unit {
            UnitKind::Jack => true,
            UnitKind::Baseline => !mode.element_format.kind.is_mx(),
        }
    }

    fn require_support(&self, mode: &Mode) -> Result<()> {
        if self.supports(mode) {
            Ok(())
        } else {
            Err(SimError::UnsupportedMode {
                mode: mode.name.to_string(),
                unit: self.unit.as_str().to_string(),
            })
        }
    }

    /// Element lanes one unit contributes per cycle in `mode`.
    pub fn lanes_per_unit(&self, mode: &Mode) -> Result<u32> {
        self.require_support(mode)?;
        Ok(match self.unit {
            UnitKind::Jack => mode.lanes,
            // The fixed-function unit is one 8-bit multiplier that splits
            // into four in the 4-bit modes.
            UnitKind::Baseline => {
                if mode.lanes == 16 {
                    4
                } else {
                    1
                }
            }
        })
    }

    /// Side scale factor from physical units to effective multipliers.
    fn effective_scale(&self, mode: &Mode) -> Result<u64> {
        self.require_support(mode)?;
        Ok(match self.unit {
            UnitKind::Jack => mode.lanes as u64,
            UnitKind::Baseline => {
                if mode.lanes == 16 {
                    4
                } else {
                    1
                }
            }
        })
    }

    /// Effective multiplier grid (rows, cols) in `mode`: the K-depth and
    /// output-width the array covers per tile.
    pub fn effective_dims(&self, mode: &Mode) -> Result<(u64, u64)> {
        let s = self.effective_scale(mode)?;
        Ok((self.rows as u64 * s, self.cols as u64 * s))
    }

    /// Total effective multipliers in `mode`.
    pub fn effective_multipliers(&self, mode: &Mode) -> Result<u64> {
        let (r, c) = self.effective_dims(mode)?;
        Ok(r * c)
    }

    /// Cycles to deliver one operand over the input link.
    pub fn input_feed_cycles(&self, mode: &Mode) -> u64 {
        (mode.element_format.total_bits() as u64).div_ceil(self.input_link_bits as u64)
    }
}
