//! Functional GEMM execution on the MAC-unit model.
//!
//! The output tensor is computed purely from the unit semantics: every
//! output cell chains `jack_mac` over lane-sized K slices in a fixed
//! order, so the result is independent of the array configuration. The
//! configuration only shapes the cycle report.

use jackmac::datapath::{
    jack_mac, normalize, round_output, JackResult, MacOperand, Mode, OutputFormat, RounderInput,
};
use jackmac::formats::{BlockCode, ScalarCode};
use num_bigint::BigInt;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::config::ArrayConfig;
use crate::error::{Result, SimError};
use crate::tensor::{check_mode_format, Tensor};
use crate::timing::{estimate_cycles, SimReport};
use crate::workload::WorkloadSpec;

/// How partial sums travel between K slices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccumulationMode {
    /// Faithful inter-unit behavior: each slice's 16-bit output feeds the
    /// next slice's accumulation port, rounding at every hop.
    Chained16,
    /// Merge the slices' raw accumulators exactly and round once at the
    /// end; quantifies the error the 16-bit chain introduces.
    Wide,
}

/// Matrix product `C = A * B` with `A` of shape `[m, k]` and `B` supplied
/// transposed as `[n, k]`, so MX blocks run along K in both operands.
/// Returns C as `[m, n]` in the mode's 16-bit output format, plus the
/// cycle report. Uses the faithful chained accumulation.
pub fn gemm_execute(
    a: &Tensor,
    b_t: &Tensor,
    cfg: &ArrayConfig,
    mode: &Mode,
) -> Result<(Tensor, SimReport)> {
    gemm_execute_with(a, b_t, cfg, mode, AccumulationMode::Chained16)
}

/// [`gemm_execute`] with an explicit accumulation mode.
pub fn gemm_execute_with(
    a: &Tensor,
    b_t: &Tensor,
    cfg: &ArrayConfig,
    mode: &Mode,
    acc_mode: AccumulationMode,
) -> Result<(Tensor, SimReport)> {
    let (m, n, k) = gemm_shape(a, b_t, mode)?;
    let spec = WorkloadSpec::gemm(mode.name, m as u64, n as u64, k as u64);
    let mut report = estimate_cycles(&spec, cfg)?;

    let out_fmt = mode.output_format.descriptor();
    let mut elements = Vec::with_capacity(m * n);
    for i in 0..m {
        for j in 0..n {
            elements.push(dot_cell(a, b_t, i, j, k, mode, acc_mode));
        }
    }
    let c = Tensor::new_scalar(out_fmt, vec![m as u32, n as u32], elements)?;
    report.result_checksum = Some(c.checksum());
    Ok((c, report))
}

fn gemm_shape(a: &Tensor, b_t: &Tensor, mode: &Mode) -> Result<(usize, usize, usize)> {
    check_mode_format(a, mode)?;
    check_mode_format(b_t, mode)?;
    if a.dims.len() != 2 || b_t.dims.len() != 2 {
        return Err(SimError::Shape(format!(
            "gemm takes rank-2 tensors, got {:?} and {:?}",
            a.dims, b_t.dims
        )));
    }
    let (m, ka) = (a.dims[0] as usize, a.dims[1] as usize);
    let (n, kb) = (b_t.dims[0] as usize, b_t.dims[1] as usize);
    if ka != kb {
        return Err(SimError::Shape(format!(
            "inner dimensions disagree: A is {m}x{ka}, transposed B is {n}x{kb}"
        )));
    }
    Ok((m, n, ka))
}

/// One K-window of a row, as a MAC operand. A tail window shorter than
/// the lane count is padded with zero codes, which add nothing.
fn lane_operand(t: &Tensor, row: usize, k0: usize, len: usize, lanes: usize) -> MacOperand {
    let k = *t.dims.last().expect("rank checked") as usize;
    let start = row * k + k0;
    let mut window = t.elements[start..start + len].to_vec();
    window.resize(lanes, ScalarCode::new(t.format, 0));
    if t.shared_exponents.is_empty() {
        MacOperand::Scalars(window)
    } else {
        // MX depths are whole blocks and lanes divide the block size, so
        // a window never straddles two blocks and is never short.
        let block = t.format.block_size as usize;
        MacOperand::Block(BlockCode {
            format: t.format,
            shared_exponent: t.shared_exponents[start / block],
            elements: window,
        })
    }
}

fn dot_cell(
    a: &Tensor,
    b_t: &Tensor,
    i: usize,
    j: usize,
    k: usize,
    mode: &Mode,
    acc_mode: AccumulationMode,
) -> ScalarCode {
    let lanes = mode.lanes as usize;
    match acc_mode {
        AccumulationMode::Chained16 => {
            let mut acc = None;
            let mut k0 = 0;
            while k0 < k {
                let len = lanes.min(k - k0);
                let x = lane_operand(a, i, k0, len, lanes);
                let w = lane_operand(b_t, j, k0, len, lanes);
                let r = jack_mac(mode, &x, &w, acc).expect("validated operands");
                acc = Some(r.output);
                k0 += len;
            }
            acc.expect("k >= 1")
        }
        AccumulationMode::Wide => {
            let mut slices = Vec::with_capacity(k.div_ceil(lanes));
            let mut k0 = 0;
            while k0 < k {
                let len = lanes.min(k - k0);
                let x = lane_operand(a, i, k0, len, lanes);
                let w = lane_operand(b_t, j, k0, len, lanes);
                slices.push(jack_mac(mode, &x, &w, None).expect("validated operands"));
                k0 += len;
            }
            merge_wide(&slices, mode)
        }
    }
}

/// Merge per-slice raw accumulators exactly and round once.
fn merge_wide(slices: &[JackResult], mode: &Mode) -> ScalarCode {
    match mode.output_format {
        OutputFormat::Int16 => {
            let mut sum = BigInt::zero();
            for s in slices {
                sum += &s.raw_accumulator;
            }
            round_output(RounderInput::Integer(&sum), mode)
        }
        OutputFormat::Fp16 => {
            // Each slice's exact value is raw * 2^(e_max - cap - F).
            let f = mode.frac_bits() as i64;
            let parts: Vec<(&BigInt, i64)> = slices
                .iter()
                .filter(|s| !s.raw_accumulator.is_zero())
                .map(|s| (&s.raw_accumulator, s.e_max - s.alignment_cap as i64 - f))
                .collect();
            let e0 = parts.iter().map(|&(_, e)| e).min().unwrap_or(0);
            let mut sum = BigInt::zero();
            for (raw, e) in parts {
                sum += raw << (e - e0) as u64;
            }
            let norm = normalize(&sum, e0, 0, 0);
            round_output(RounderInput::Normalized(&norm), mode)
        }
    }
}
