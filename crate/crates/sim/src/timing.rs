//! Weight-stationary cycle model.
//!
//! The array is treated as its effective multiplier grid: an `Er x Ec`
//! systolic surface (physical units times the mode's lane scale per side).
//! Weights for a `K_t x N_t` tile stay resident while all M activation
//! rows stream through, so one fold costs
//!
//! ```text
//! feed * (K_t + N_t - 1 + M)        // pipeline fill + stream
//! ```
//!
//! with `feed = ceil(element_bits / input_link_bits)` modeling operands
//! delivered over multiple cycles on narrow links. The workload folds over
//! `ceil(K/Er) * ceil(N/Ec)` weight tiles.
//!
//! Memory is a single bandwidth scalar with double-buffered prefetch: the
//! next fold's weight and activation tiles plus the previous fold's
//! amortized output store overlap compute, and a fold stalls only when
//! those bytes exceed `compute * bandwidth`. MX tensors move one extra
//! byte per 32 elements for shared exponents. Buffer capacities are
//! carried in the config but do not constrain v1 tiling.

use jackmac::datapath::Mode;
use serde::{Deserialize, Serialize};

use crate::config::ArrayConfig;
use crate::error::{Result, SimError};
use crate::workload::WorkloadSpec;

/// Cycle accounting for one simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub total_cycles: u64,
    pub compute_cycles: u64,
    pub memory_stall_cycles: u64,
    pub input_feed_cycles_per_operand: u64,
    /// Useful MACs over peak MAC slots, in (0, 1].
    pub utilization: f64,
    /// Hash of the output tensor; absent for cycle estimates that never
    /// materialize one.
    pub result_checksum: Option<String>,
}

/// Largest dimension the desk-scale model accepts.
const DIM_CAP: u64 = 1 << 24;
/// Largest number of weight folds the model will walk.
const FOLD_CAP: u64 = 1 << 20;

struct TileWalk {
    er: u64,
    ec: u64,
    feed: u64,
    m: u64,
    n: u64,
    k: u64,
    kf: u64,
    nf: u64,
    elem_bits: u64,
    mx_block: u64,
    bandwidth: u64,
}

impl TileWalk {
    fn new(spec: &WorkloadSpec, cfg: &ArrayConfig) -> Result<TileWalk> {
        spec.validate()?;
        cfg.validate()?;
        let mode: Mode = spec.mode();
        let (er, ec) = cfg.effective_dims(&mode)?;
        let (m, n, k) = spec.gemm_dims();
        for (name, v) in [("M", m), ("N", n), ("K", k)] {
            if v > DIM_CAP {
                return Err(SimError::Config(format!(
                    "{name}={v} exceeds the desk-scale limit of {DIM_CAP}"
                )));
            }
        }
        let kf = k.div_ceil(er);
        let nf = n.div_ceil(ec);
        if kf * nf > FOLD_CAP {
            return Err(SimError::Config(format!(
                "{} weight folds exceed the desk-scale limit of {FOLD_CAP}",
                kf * nf
            )));
        }
        let fmt = mode.element_format;
        Ok(TileWalk {
            er,
            ec,
            feed: cfg.input_feed_cycles(&mode),
            m,
            n,
            k,
            kf,
            nf,
            elem_bits: fmt.total_bits() as u64,
            mx_block: if fmt.kind.is_mx() {
                fmt.block_size as u64
            } else {
                0
            },
            bandwidth: cfg.bandwidth_bytes_per_cycle as u64,
        })
    }

    fn k_tile(&self, kt: u64) -> u64 {
        self.er.min(self.k - kt * self.er)
    }

    fn n_tile(&self, nt: u64) -> u64 {
        self.ec.min(self.n - nt * self.ec)
    }

    /// Operand bytes for `count` elements, shared-exponent bytes included.
    fn operand_bytes(&self, count: u64) -> u64 {
        let mut b = (count * self.elem_bits).div_ceil(8);
        if self.mx_block > 0 {
            b += count.div_ceil(self.mx_block);
        }
        b
    }

    fn cycles(&self, bytes: u64) -> u64 {
        bytes.div_ceil(self.bandwidth)
    }

    /// Load bytes (weights + activations) for fold `f`.
    fn load_bytes(&self, f: u64) -> u64 {
        let (nt, kt) = (f / self.kf, f % self.kf);
        let w = self.operand_bytes(self.k_tile(kt) * self.n_tile(nt));
        let a = self.operand_bytes(self.m * self.k_tile(kt));
        w + a
    }

    /// Amortized output-store bytes charged to fold `f`.
    fn store_bytes(&self, f: u64) -> u64 {
        let nt = f / self.kf;
        (self.m * self.n_tile(nt) * 2).div_ceil(self.kf)
    }

    fn compute_cycles(&self, f: u64) -> u64 {
        let (nt, kt) = (f / self.kf, f % self.kf);
        self.feed * (self.k_tile(kt) + self.n_tile(nt) - 1 + self.m)
    }
}

/// Estimate cycle counts for a workload without executing it.
pub fn estimate_cycles(spec: &WorkloadSpec, cfg: &ArrayConfig) -> Result<SimReport> {
    let walk = TileWalk::new(spec, cfg)?;
    let folds = walk.kf * walk.nf;

    let mut compute_cycles = 0u64;
    let mut total = walk.cycles(walk.load_bytes(0));
    for f in 0..folds {
        let compute = walk.compute_cycles(f);
        compute_cycles += compute;
        let mut background = 0;
        if f + 1 < folds {
            background += walk.cycles(walk.load_bytes(f + 1));
        }
        if f > 0 {
            background += walk.cycles(walk.store_bytes(f - 1));
        }
        total += compute.max(background);
    }
    total += walk.cycles(walk.store_bytes(folds - 1));

    let peak = (walk.er * walk.ec) as f64 * total as f64;
    Ok(SimReport {
        total_cycles: total,
        compute_cycles,
        memory_stall_cycles: total - compute_cycles,
        input_feed_cycles_per_operand: walk.feed,
        utilization: (walk.m as f64) * (walk.n as f64) * (walk.k as f64) / peak,
        result_checksum: None,
    })
}

/// Side-by-side cycle comparison of two configurations on one workload.
#[derive(Debug, Clone, Serialize)]
pub struct ConfigComparison {
    pub spec: WorkloadSpec,
    pub a: SimReport,
    pub b: SimReport,
    pub total_cycle_ratio_a_over_b: f64,
    pub compute_cycle_ratio_a_over_b: f64,
    pub effective_multipliers_a: u64,
    pub effective_multipliers_b: u64,
}

/// Compare two configs on the same workload. Area is out of scope; this
/// reports cycles and effective-multiplier counts only.
pub fn compare_configs(
    spec: &WorkloadSpec,
    cfg_a: &ArrayConfig,
    cfg_b: &ArrayConfig,
) -> Result<ConfigComparison> {
    let mode = spec.mode();
    let a = estimate_cycles(spec, cfg_a)?;
    let b = estimate_cycles(spec, cfg_b)?;
    Ok(ConfigComparison {
        spec: *spec,
        total_cycle_ratio_a_over_b: a.total_cycles as f64 / b.total_cycles as f64,
        compute_cycle_ratio_a_over_b: a.compute_cycles as f64 / b.compute_cycles as f64,
        effective_multipliers_a: cfg_a.effective_multipliers(&mode)?,
        effective_multipliers_b: cfg_b.effective_multipliers(&mode)?,
        a,
        b,
    })
}
