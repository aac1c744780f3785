//! Cycle-level simulator for systolic arrays built from the MAC unit.
//!
//! The crate splits cleanly in two:
//!
//! * **Functional execution** ([`gemm_execute`], [`conv_execute`]) computes
//!   outputs purely from the unit's bit-level semantics. Results are
//!   identical for every array configuration; only the cycle report
//!   changes.
//! * **Timing estimation** ([`estimate_cycles`], [`compare_configs`])
//!   models output-stationary tiling over the effective grid, overlapping
//!   tile loads and partial-sum stores with compute.
//!
//! Tensors travel in a small binary container (see [`tensor`]) that packs
//! element codes at their native width and carries MX shared exponents
//! alongside.

pub mod config;
pub mod conv;
pub mod error;
pub mod gemm;
pub mod tensor;
pub mod timing;
pub mod workload;

pub use config::{ArrayConfig, UnitKind};
pub use conv::{conv_execute, conv_execute_with, im2col};
pub use error::{Result, SimError};
pub use gemm::{gemm_execute, gemm_execute_with, AccumulationMode};
pub use tensor::{parse_tensor, read_tensor, F32Tensor, LoadedTensor, Tensor};
pub use timing::{compare_configs, estimate_cycles, ConfigComparison, SimReport};
pub use workload::{WorkloadDims, WorkloadSpec};
