//! Self-check suites pitting the datapath against the exact oracles.
//!
//! Each suite either sweeps a space exhaustively (the 4-bit and 8-bit
//! multiplier grids) or drives seeded random trials through both the
//! datapath model and an independent golden reference, comparing outputs
//! bit for bit. Suites are deterministic for a given seed, so a reported
//! counterexample can be replayed.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::csm::{mul8x8, submul4, SubMulConfig};
use crate::datapath::{jack_mac, jack_mac_reference, MacOperand, Mode, ModeName};
use crate::formats::{decode, dequantize_block, BlockCode, ExactValue, ScalarCode};
use crate::oracle::{exact_add, exact_dot, exact_int_dot, saturate16_code, truncate_exact_to_fp16};
use crate::{Error, Result};

/// The available verification suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    /// Exhaustive 4x4-bit sub-multiplier sweep, all sign configurations.
    Submul,
    /// Exhaustive 8x8-bit fused-product sweep, all sign configurations.
    Fusion,
    /// Random FP-mode MACs against the exact dot product, one truncation.
    FpOracle,
    /// Random INT-mode MACs against the exact integer dot product.
    IntOracle,
    /// Grouped datapath against the one-shifter-per-sub-product baseline.
    GroupedEq,
    /// Shared-exponent shifts must move FP outputs by exact powers of two.
    MxScaling,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Submul,
        Suite::Fusion,
        Suite::FpOracle,
        Suite::IntOracle,
        Suite::GroupedEq,
        Suite::MxScaling,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Suite::Submul => "submul",
            Suite::Fusion => "fusion",
            Suite::FpOracle => "fp-oracle",
            Suite::IntOracle => "int-oracle",
            Suite::GroupedEq => "grouped-eq",
            Suite::MxScaling => "mx-scaling",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .iter()
            .copied()
            .find(|suite| suite.as_str() == s)
            .ok_or_else(|| Error::UnknownSuite(s.to_string()))
    }
}

/// Outcome of one suite run.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub seed: u64,
    /// Comparisons actually performed (exhaustive suites ignore `trials`).
    pub checks: u64,
    pub failures: u64,
    /// Up to the first five counterexamples, for replay.
    pub examples: Vec<String>,
}

impl SuiteReport {
    fn new(suite: Suite, seed: u64) -> Self {
        SuiteReport {
            suite,
            seed,
            checks: 0,
            failures: 0,
            examples: Vec::new(),
        }
    }

    fn record(&mut self, ok: bool, example: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failures += 1;
            if self.examples.len() < 5 {
                self.examples.push(example());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0 && self.checks > 0
    }
}

const SIGN_CONFIGS: [SubMulConfig; 4] = [
    SubMulConfig {
        a_signed: false,
        b_signed: false,
    },
    SubMulConfig {
        a_signed: false,
        b_signed: true,
    },
    SubMulConfig {
        a_signed: true,
        b_signed: false,
    },
    SubMulConfig {
        a_signed: true,
        b_signed: true,
    },
];

/// Run one suite. `trials` bounds the random-case count for the randomized
/// suites; the exhaustive suites sweep their whole space regardless.
pub fn run_suite(suite: Suite, trials: u64, seed: u64) -> SuiteReport {
    let mut report = SuiteReport::new(suite, seed);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    match suite {
        Suite::Submul => run_submul(&mut report),
        Suite::Fusion => run_fusion(&mut report),
        Suite::FpOracle => run_fp_oracle(&mut report, trials, &mut rng),
        Suite::IntOracle => run_int_oracle(&mut report, trials, &mut rng),
        Suite::GroupedEq => run_grouped_eq(&mut report, trials, &mut rng),
        Suite::MxScaling => run_mx_scaling(&mut report, trials, &mut rng),
    }
    report
}

fn nibble_oracle(n: u8, signed: bool) -> i32 {
    if signed {
        ((n as i32) ^ 8) - 8
    } else {
        n as i32
    }
}

fn byte_oracle(n: u8, signed: bool) -> i32 {
    if signed {
        n as i8 as i32
    } else {
        n as i32
    }
}

fn run_submul(report: &mut SuiteReport) {
    for a in 0u8..16 {
        for b in 0u8..16 {
            for cfg in SIGN_CONFIGS {
                let want = nibble_oracle(a, cfg.a_signed) * nibble_oracle(b, cfg.b_signed);
                let got = submul4(a, b, cfg);
                report.record(got == want, || {
                    format!("submul4({a:#x}, {b:#x}, {cfg:?}) = {got}, want {want}")
                });
            }
        }
    }
}

fn run_fusion(report: &mut SuiteReport) {
    for a in 0..=255u8 {
        for b in 0..=255u8 {
            for cfg in SIGN_CONFIGS {
                let want = byte_oracle(a, cfg.a_signed) * byte_oracle(b, cfg.b_signed);
                let got = mul8x8(a, b, cfg);
                report.record(got == want, || {
                    format!("mul8x8({a:#04x}, {b:#04x}, {cfg:?}) = {got}, want {want}")
                });
            }
        }
    }
}

/// Random codes for one operand of `mode`, either plain scalars or an MX
/// block with a small shared exponent.
fn random_operand(rng: &mut ChaCha12Rng, mode: &Mode) -> MacOperand {
    let fmt = mode.element_format;
    let elements: Vec<ScalarCode> = (0..mode.lanes)
        .map(|_| ScalarCode::new(fmt, rng.gen::<u16>()))
        .collect();
    if fmt.kind.is_mx() {
        MacOperand::Block(BlockCode {
            format: fmt,
            shared_exponent: rng.gen_range(-8i8..=8),
            elements,
        })
    } else {
        MacOperand::Scalars(elements)
    }
}

fn random_acc(rng: &mut ChaCha12Rng, mode: &Mode) -> Option<ScalarCode> {
    if rng.gen_bool(0.5) {
        return None;
    }
    Some(ScalarCode::new(
        mode.output_format.descriptor(),
        rng.gen::<u16>(),
    ))
}

/// Decode an operand to exact lane values, applying any shared exponent.
fn decoded_lanes(op: &MacOperand) -> Vec<ExactValue> {
    match op {
        MacOperand::Scalars(codes) => codes.iter().map(decode).collect(),
        MacOperand::Block(block) => dequantize_block(block),
    }
}

fn describe(op: &MacOperand) -> String {
    match op {
        MacOperand::Scalars(codes) => {
            let hex: Vec<String> = codes.iter().map(|c| format!("{:#x}", c.bits)).collect();
            format!("[{}]", hex.join(","))
        }
        MacOperand::Block(block) => {
            let hex: Vec<String> = block
                .elements
                .iter()
                .map(|c| format!("{:#x}", c.bits))
                .collect();
            format!("2^{}*[{}]", block.shared_exponent, hex.join(","))
        }
    }
}

fn run_fp_oracle(report: &mut SuiteReport, trials: u64, rng: &mut ChaCha12Rng) {
    let modes = [ModeName::Bf16, ModeName::Fp8, ModeName::MxFp8];
    for i in 0..trials {
        let mode = Mode::from_name(modes[(i % 3) as usize]);
        let x = random_operand(rng, &mode);
        let w = random_operand(rng, &mode);
        let acc = random_acc(rng, &mode);

        let got = jack_mac(&mode, &x, &w, acc).expect("well-formed operands");
        let mut sum = exact_dot(&decoded_lanes(&x), &decoded_lanes(&w)).expect("equal lanes");
        if let Some(a) = acc {
            sum = exact_add(&sum, &decode(&a));
        }
        let want = truncate_exact_to_fp16(&sum);
        report.record(got.output.bits == want.bits, || {
            format!(
                "{} x={} w={} acc={:?}: datapath {:#06x}, oracle {:#06x}",
                mode.name,
                describe(&x),
                describe(&w),
                acc.map(|a| a.bits),
                got.output.bits,
                want.bits
            )
        });
    }
}

fn run_int_oracle(report: &mut SuiteReport, trials: u64, rng: &mut ChaCha12Rng) {
    let modes = [ModeName::Int8, ModeName::Int4];
    for i in 0..trials {
        let mode = Mode::from_name(modes[(i % 2) as usize]);
        let x = random_operand(rng, &mode);
        let w = random_operand(rng, &mode);
        let acc = random_acc(rng, &mode);

        let got = jack_mac(&mode, &x, &w, acc).expect("well-formed operands");
        let ints = |op: &MacOperand| -> Vec<i64> {
            match op {
                MacOperand::Scalars(codes) => codes.iter().map(|c| c.as_int() as i64).collect(),
                MacOperand::Block(_) => unreachable!("INT modes use scalar operands"),
            }
        };
        let mut sum = exact_int_dot(&ints(&x), &ints(&w)).expect("equal lanes");
        if let Some(a) = acc {
            sum += a.as_int() as i64;
        }
        let want = saturate16_code(sum);
        report.record(got.output.bits == want.bits, || {
            format!(
                "{} x={} w={} acc={:?}: datapath {:#06x}, oracle {:#06x}",
                mode.name,
                describe(&x),
                describe(&w),
                acc.map(|a| a.bits),
                got.output.bits,
                want.bits
            )
        });
    }
}

fn run_grouped_eq(report: &mut SuiteReport, trials: u64, rng: &mut ChaCha12Rng) {
    let modes = Mode::all();
    for i in 0..trials {
        let mode = &modes[(i as usize) % modes.len()];
        let x = random_operand(rng, mode);
        let w = random_operand(rng, mode);
        let acc = random_acc(rng, mode);

        let grouped = jack_mac(mode, &x, &w, acc).expect("well-formed operands");
        let ungrouped = jack_mac_reference(mode, &x, &w, acc).expect("well-formed operands");
        let ok = grouped.output.bits == ungrouped.output.bits
            && grouped.raw_accumulator == ungrouped.raw_accumulator
            && grouped.e_max == ungrouped.e_max;
        report.record(ok, || {
            format!(
                "{} x={} w={} acc={:?}: grouped {:#06x}/{}, ungrouped {:#06x}/{}",
                mode.name,
                describe(&x),
                describe(&w),
                acc.map(|a| a.bits),
                grouped.output.bits,
                grouped.raw_accumulator,
                ungrouped.output.bits,
                ungrouped.raw_accumulator
            )
        });
    }
}

/// One MX scaling trial: fix element codes, slide the shared exponents by
/// k, and require the FP16 output to move by exactly 2^k, bit for bit in
/// the exponent field with sign and mantissa untouched.
fn run_mx_scaling(report: &mut SuiteReport, trials: u64, rng: &mut ChaCha12Rng) {
    let modes = [ModeName::MxInt8, ModeName::MxInt4, ModeName::MxFp8];
    let mut produced = 0u64;
    while produced < trials {
        let mode = Mode::from_name(modes[(produced % 3) as usize]);
        let fmt = mode.element_format;
        let elements = |rng: &mut ChaCha12Rng| -> Vec<ScalarCode> {
            (0..mode.lanes)
                .map(|_| ScalarCode::new(fmt, rng.gen::<u16>()))
                .collect()
        };
        let xe = elements(rng);
        let we = elements(rng);

        // Find the dot product's binade at shared exponents (0, 0); skip
        // the rare all-cancelling draw.
        let block = |elements: &[ScalarCode], shared: i8| -> MacOperand {
            MacOperand::Block(BlockCode {
                format: fmt,
                shared_exponent: shared,
                elements: elements.to_vec(),
            })
        };
        let base_dot = exact_dot(
            &decoded_lanes(&block(&xe, 0)),
            &decoded_lanes(&block(&we, 0)),
        )
        .expect("equal lanes");
        let Some(binade) = base_dot.floor_log2() else {
            continue;
        };

        // Center the output near 2^0 so every k in [-3, 3] stays clear of
        // both the flush and saturation edges.
        let centre = -binade;
        let ex = (centre / 2).clamp(-96, 96) as i8;
        let ey = (centre - centre / 2).clamp(-96, 96) as i8;
        if (ex as i64) + (ey as i64) != centre {
            // Binade out of reach of i8 shared exponents; draw again.
            continue;
        }

        let base = jack_mac(&mode, &block(&xe, ex), &block(&we, ey), None)
            .expect("well-formed operands");
        let base_bits = base.output.bits;
        for k in -3i64..=3 {
            let shifted = jack_mac(&mode, &block(&xe, ex + k as i8), &block(&we, ey), None)
                .expect("well-formed operands");
            let want_e = ((base_bits >> 10) & 0x1F) as i64 + k;
            let got_e = ((shifted.output.bits >> 10) & 0x1F) as i64;
            let ok = got_e == want_e
                && (shifted.output.bits & 0x83FF) == (base_bits & 0x83FF);
            report.record(ok, || {
                format!(
                    "{} x={} w={} shift {k:+}: base {:#06x}, shifted {:#06x}",
                    mode.name,
                    describe(&block(&xe, ex)),
                    describe(&block(&we, ey)),
                    base_bits,
                    shifted.output.bits
                )
            });
        }
        produced += 1;
    }
}
