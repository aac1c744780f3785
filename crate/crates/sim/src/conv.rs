//! 2-D convolution lowered onto the GEMM path.
//!
//! Activations are laid out `[h, w, cin]` and weights `[cout, kh, kw, cin]`,
//! so channels are innermost everywhere and an MX block never crosses a
//! spatial boundary. `im2col` gathers each sliding window into one GEMM
//! row in `(dh, dw, c)` order, which matches the flattened weight layout.

use jackmac::datapath::Mode;

use crate::config::ArrayConfig;
use crate::error::{Result, SimError};
use crate::gemm::{gemm_execute_with, AccumulationMode};
use crate::tensor::Tensor;
use crate::timing::SimReport;

/// Output height/width for a valid (no padding) convolution.
fn out_extent(extent: u32, kernel: u32, stride: u32) -> u32 {
    (extent - kernel) / stride + 1
}

/// Gather sliding windows of `x` (`[h, w, cin]`) into a `[ho*wo, kh*kw*cin]`
/// matrix whose rows scan the output raster and whose columns run in
/// `(dh, dw, c)` order. For MX tensors the channel depth must be a whole
/// number of blocks, so shared exponents move with their elements.
pub fn im2col(x: &Tensor, kh: u32, kw: u32, stride: u32) -> Result<Tensor> {
    if x.dims.len() != 3 {
        return Err(SimError::Shape(format!(
            "im2col takes [h, w, cin] activations, got {:?}",
            x.dims
        )));
    }
    let (h, w, cin) = (x.dims[0], x.dims[1], x.dims[2]);
    if stride == 0 {
        return Err(SimError::Shape("stride must be at least 1".into()));
    }
    if kh == 0 || kw == 0 || kh > h || kw > w {
        return Err(SimError::Shape(format!(
            "kernel {kh}x{kw} does not fit a {h}x{w} input"
        )));
    }
    let block = x.format.block_size as u32;
    let mx = !x.shared_exponents.is_empty();
    if mx && cin % block != 0 {
        return Err(SimError::Shape(format!(
            "channel depth {cin} must be a multiple of the block size {block}"
        )));
    }

    let (ho, wo) = (out_extent(h, kh, stride), out_extent(w, kw, stride));
    let rows = (ho as u64) * (wo as u64);
    let k = (kh as u64) * (kw as u64) * (cin as u64);
    if rows > u32::MAX as u64 || k > u32::MAX as u64 {
        return Err(SimError::Shape(format!(
            "im2col result {rows}x{k} exceeds the tensor dimension limit"
        )));
    }

    let (w, cin, kh, kw, stride) = (
        w as usize,
        cin as usize,
        kh as usize,
        kw as usize,
        stride as usize,
    );
    let mut elements = Vec::with_capacity((rows * k) as usize);
    let mut shared = Vec::new();
    for h0 in 0..ho as usize {
        for w0 in 0..wo as usize {
            for dh in 0..kh {
                for dw in 0..kw {
                    let pixel = (h0 * stride + dh) * w + (w0 * stride + dw);
                    let start = pixel * cin;
                    elements.extend_from_slice(&x.elements[start..start + cin]);
                    if mx {
                        let b = block as usize;
                        let first = pixel * (cin / b);
                        shared.extend_from_slice(&x.shared_exponents[first..first + cin / b]);
                    }
                }
            }
        }
    }
    let dims = vec![rows as u32, k as u32];
    if mx {
        Tensor::new_mx(x.format, dims, elements, shared)
    } else {
        Tensor::new_scalar(x.format, dims, elements)
    }
}

/// Valid convolution of `x` (`[h, w, cin]`) with `w` (`[cout, kh, kw, cin]`),
/// returning `[ho, wo, cout]` in the mode's output format plus the cycle
/// report. Uses the faithful chained accumulation.
pub fn conv_execute(
    x: &Tensor,
    weights: &Tensor,
    stride: u32,
    cfg: &ArrayConfig,
    mode: &Mode,
) -> Result<(Tensor, SimReport)> {
    conv_execute_with(x, weights, stride, cfg, mode, AccumulationMode::Chained16)
}

/// [`conv_execute`] with an explicit accumulation mode.
pub fn conv_execute_with(
    x: &Tensor,
    weights: &Tensor,
    stride: u32,
    cfg: &ArrayConfig,
    mode: &Mode,
    acc_mode: AccumulationMode,
) -> Result<(Tensor, SimReport)> {
    if weights.dims.len() != 4 {
        return Err(SimError::Shape(format!(
            "conv weights are [cout, kh, kw, cin], got {:?}",
            weights.dims
        )));
    }
    let (cout, kh, kw, cin) = (
        weights.dims[0],
        weights.dims[1],
        weights.dims[2],
        weights.dims[3],
    );
    if x.dims.len() != 3 || x.dims[2] != cin {
        return Err(SimError::Shape(format!(
            "activations {:?} do not match weight channel depth {cin}",
            x.dims
        )));
    }
    let patches = im2col(x, kh, kw, stride)?;

    // The weight tensor already stores each filter in (dh, dw, c) order,
    // so flattening to [cout, K] is a pure reshape.
    let k = patches.dims[1];
    let w_flat = if weights.shared_exponents.is_empty() {
        Tensor::new_scalar(weights.format, vec![cout, k], weights.elements.clone())?
    } else {
        Tensor::new_mx(
            weights.format,
            vec![cout, k],
            weights.elements.clone(),
            weights.shared_exponents.clone(),
        )?
    };

    let (flat, mut report) = gemm_execute_with(&patches, &w_flat, cfg, mode, acc_mode)?;
    let (ho, wo) = (out_extent(x.dims[0], kh, stride), out_extent(x.dims[1], kw, stride));
    let y = Tensor::new_scalar(flat.format, vec![ho, wo, cout], flat.elements)?;
    report.result_checksum = Some(y.checksum());
    Ok((y, report))
}
