//! Bit-accurate software model of a multi-format multiply-accumulate unit.
//!
//! One integer datapath serves seven operand formats (bfloat16, FP8 E4M3,
//! INT8, INT4 and the shared-exponent MX variants MXINT8, MXINT4, MXFP8):
//! significands multiply in precision-scalable 4-bit sub-multipliers, align
//! against the largest product exponent, and accumulate in an exact integer
//! adder that drops no bits, so the 16-bit output equals the infinitely
//! precise dot product truncated exactly once.
//!
//! The crate is organised after the unit's pipeline:
//!
//! * [`formats`]  — format descriptors, exact dyadic values, encode/decode,
//!   MX block quantisation;
//! * [`csm`]      — the precision-scalable carry-save multiplier (4x4
//!   sub-products, 8x8 fusion, structural accounting);
//! * [`datapath`] — sign/exponent extraction, alignment, exact accumulation,
//!   normalisation and output rounding for every mode;
//! * [`oracle`]   — independent exact-arithmetic references the datapath is
//!   tested against (no arithmetic code shared with the datapath);
//! * [`verify`]   — seeded equivalence suites shared by the CLI and the
//!   acceptance tests.

pub mod csm;
pub mod datapath;
mod error;
pub mod formats;
pub mod oracle;
pub mod verify;

pub use error::Error;

pub type Result<T> = std::result::Result<T, Error>;
