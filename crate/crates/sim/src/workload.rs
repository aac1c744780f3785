//! Workload descriptions: plain GEMMs and im2col-lowered convolutions.

use jackmac::datapath::{Mode, ModeName};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Problem dimensions, tagged by kind. Convolutions use valid padding and
/// channels-last layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum WorkloadDims {
    #[serde(rename = "GEMM")]
    Gemm { m: u64, n: u64, k: u64 },
    #[serde(rename = "CONV")]
    Conv {
        h: u64,
        w: u64,
        cin: u64,
        cout: u64,
        kh: u64,
        kw: u64,
        stride: u64,
    },
}

impl WorkloadDims {
    /// The serialized kind tag.
    pub fn kind_name(&self) -> &'static str {
        match self {
            WorkloadDims::Gemm { .. } => "GEMM",
            WorkloadDims::Conv { .. } => "CONV",
        }
    }
}

/// One workload: what to run and in which unit mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub mode: ModeName,
    #[serde(flatten)]
    pub dims: WorkloadDims,
}

impl WorkloadSpec {
    pub fn gemm(mode: ModeName, m: u64, n: u64, k: u64) -> Self {
        WorkloadSpec {
            mode,
            dims: WorkloadDims::Gemm { m, n, k },
        }
    }

    pub fn mode(&self) -> Mode {
        Mode::from_name(self.mode)
    }

    pub fn validate(&self) -> Result<()> {
        let dims: Vec<(&str, u64)> = match self.dims {
            WorkloadDims::Gemm { m, n, k } => vec![("m", m), ("n", n), ("k", k)],
            WorkloadDims::Conv {
                h,
                w,
                cin,
                cout,
                kh,
                kw,
                stride,
            } => vec![
                ("h", h),
                ("w", w),
                ("cin", cin),
                ("cout", cout),
                ("kh", kh),
                ("kw", kw),
                ("stride", stride),
            ],
        };
        for (name, v) in dims {
            if v == 0 {
                return Err(SimError::Shape(format!("{name} must be at least 1")));
            }
        }
        if let WorkloadDims::Conv { h, w, kh, kw, .. } = self.dims {
            if kh > h || kw > w {
                return Err(SimError::Shape(format!(
                    "kernel {kh}x{kw} exceeds input {h}x{w} under valid padding"
                )));
            }
        }
        Ok(())
    }

    /// Output spatial size of a convolution under valid padding.
    pub fn conv_output(&self) -> Option<(u64, u64)> {
        match self.dims {
            WorkloadDims::Conv {
                h, w, kh, kw, stride, ..
            } => Some(((h - kh) / stride + 1, (w - kw) / stride + 1)),
            WorkloadDims::Gemm { .. } => None,
        }
    }

    /// The (M, N, K) this workload presents to the array; convolutions
    /// lower via im2col.
    pub fn gemm_dims(&self) -> (u64, u64, u64) {
        match self.dims {
            WorkloadDims::Gemm { m, n, k } => (m, n, k),
            WorkloadDims::Conv {
                cin, cout, kh, kw, ..
            } => {
                let (ho, wo) = self.conv_output().expect("conv dims");
                (ho * wo, cout, kh * kw * cin)
            }
        }
    }
}
