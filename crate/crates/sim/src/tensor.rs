//! Encoded tensors and the JKT1 container format.
//!
//! A [`Tensor`] holds element codes in one of the unit's formats plus, for
//! MX formats, one shared exponent per 32-element block laid along the
//! innermost dimension. The JKT1 wire format is:
//!
//! ```text
//! magic "JKT1" | dtype: u8 | ndim: u8 | dims: ndim x u32 LE |
//! element codes, little-endian, packed to whole bytes
//! (4-bit formats: two codes per byte, low nibble first) |
//! MX only: one i8 shared exponent per block
//! ```
//!
//! dtype 9 is a raw little-endian `f32` carrier used to ship real-valued
//! tensors into the quantizer; it never appears as a compute format.

use std::io::{Read, Write};

use jackmac::datapath::Mode;
use jackmac::formats::{
    preset, BlockCode, ExactValue, FormatDescriptor, ScalarCode, FP16, INT16,
};

use crate::error::{Result, SimError};

pub const MAGIC: [u8; 4] = *b"JKT1";

/// dtype byte for the `f32` carrier encoding.
pub const DTYPE_F32: u8 = 9;

const DTYPE_TABLE: [&str; 9] = [
    "bf16", "fp8_e4m3", "int8", "int4", "mxint8", "mxint4", "mxfp8_e4m3", "fp16", "int16",
];

/// The dtype byte for a format, if the format is addressable in files.
pub fn dtype_id(format: &FormatDescriptor) -> Option<u8> {
    let name = jackmac::formats::preset_name(format)?;
    DTYPE_TABLE
        .iter()
        .position(|&n| n == name)
        .map(|i| i as u8)
}

/// The format for a dtype byte; `None` for unknown ids and for the f32
/// carrier, which has no element format.
pub fn format_for_dtype(id: u8) -> Option<FormatDescriptor> {
    match *DTYPE_TABLE.get(id as usize)? {
        "fp16" => Some(FP16),
        "int16" => Some(INT16),
        name => preset(name).ok(),
    }
}

/// An n-dimensional tensor of element codes, row-major, innermost
/// dimension last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tensor {
    pub format: FormatDescriptor,
    pub dims: Vec<u32>,
    /// `product(dims)` codes in row-major order.
    pub elements: Vec<ScalarCode>,
    /// MX formats: one exponent per block of `format.block_size` elements
    /// along the innermost dimension. Empty for scalar formats.
    pub shared_exponents: Vec<i8>,
}

fn checked_len(dims: &[u32]) -> Result<usize> {
    if dims.is_empty() {
        return Err(SimError::Shape("tensor needs at least one dimension".into()));
    }
    let mut n = 1usize;
    for &d in dims {
        if d == 0 {
            return Err(SimError::Shape("zero-sized dimension".into()));
        }
        n = n
            .checked_mul(d as usize)
            .ok_or_else(|| SimError::Shape("dimension product overflows".into()))?;
    }
    Ok(n)
}

impl Tensor {
    /// A tensor in a scalar (non-MX) format.
    pub fn new_scalar(
        format: FormatDescriptor,
        dims: Vec<u32>,
        elements: Vec<ScalarCode>,
    ) -> Result<Self> {
        if format.kind.is_mx() {
            return Err(SimError::Shape(format!(
                "format {} carries shared exponents; use new_mx",
                format
            )));
        }
        let n = checked_len(&dims)?;
        if elements.len() != n {
            return Err(SimError::Shape(format!(
                "{} elements for dims {:?} (want {})",
                elements.len(),
                dims,
                n
            )));
        }
        check_elements(&format, &elements)?;
        Ok(Tensor {
            format,
            dims,
            elements,
            shared_exponents: Vec::new(),
        })
    }

    /// A tensor in an MX format. The innermost dimension must be a
    /// multiple of the block size so blocks never straddle rows.
    pub fn new_mx(
        format: FormatDescriptor,
        dims: Vec<u32>,
        elements: Vec<ScalarCode>,
        shared_exponents: Vec<i8>,
    ) -> Result<Self> {
        if !format.kind.is_mx() {
            return Err(SimError::Shape(format!(
                "format {} has no shared exponents; use new_scalar",
                format
            )));
        }
        let n = checked_len(&dims)?;
        let block = format.block_size as usize;
        let inner = *dims.last().expect("checked_len requires ndim >= 1") as usize;
        if inner % block != 0 {
            return Err(SimError::Shape(format!(
                "innermost dimension {} is not a multiple of the block size {}",
                inner, block
            )));
        }
        if elements.len() != n {
            return Err(SimError::Shape(format!(
                "{} elements for dims {:?} (want {})",
                elements.len(),
                dims,
                n
            )));
        }
        if shared_exponents.len() != n / block {
            return Err(SimError::Shape(format!(
                "{} shared exponents for {} blocks",
                shared_exponents.len(),
                n / block
            )));
        }
        check_elements(&format, &elements)?;
        Ok(Tensor {
            format,
            dims,
            elements,
            shared_exponents,
        })
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    /// Decode every element to its exact value, shared exponents applied.
    pub fn decode_all(&self) -> Vec<ExactValue> {
        use jackmac::formats::decode;
        if self.shared_exponents.is_empty() {
            return self.elements.iter().map(decode).collect();
        }
        let block = self.format.block_size as usize;
        self.elements
            .iter()
            .enumerate()
            .map(|(i, c)| decode(c).scale_pow2(self.shared_exponents[i / block] as i64))
            .collect()
    }

    /// The shared-exponent block holding element `index`, as a one-block
    /// view. Panics for scalar formats.
    pub fn block_of(&self, index: usize) -> BlockCode {
        let block = self.format.block_size as usize;
        let b = index / block;
        BlockCode {
            format: self.format,
            shared_exponent: self.shared_exponents[b],
            elements: self.elements[b * block..(b + 1) * block].to_vec(),
        }
    }

    /// Serialize to JKT1 bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.push(dtype_id(&self.format).expect("tensor formats are file-addressable"));
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        pack_codes(&mut out, &self.format, &self.elements);
        for &e in &self.shared_exponents {
            out.push(e as u8);
        }
        out
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    /// FNV-1a 64 over the canonical JKT1 encoding, as a hex string.
    pub fn checksum(&self) -> String {
        let mut h = 0xcbf29ce484222325u64;
        for b in self.to_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}

fn check_elements(format: &FormatDescriptor, elements: &[ScalarCode]) -> Result<()> {
    if let Some(bad) = elements.iter().find(|c| c.format != *format) {
        return Err(SimError::Shape(format!(
            "element encoded as {} in a {} tensor",
            bad.format, format
        )));
    }
    Ok(())
}

fn pack_codes(out: &mut Vec<u8>, format: &FormatDescriptor, codes: &[ScalarCode]) {
    match format.total_bits() {
        4 => {
            for pair in codes.chunks(2) {
                let lo = (pair[0].bits & 0xF) as u8;
                let hi = if pair.len() == 2 {
                    (pair[1].bits & 0xF) as u8
                } else {
                    0
                };
                out.push(lo | (hi << 4));
            }
        }
        8 => out.extend(codes.iter().map(|c| c.bits as u8)),
        16 => {
            for c in codes {
                out.extend_from_slice(&c.bits.to_le_bytes());
            }
        }
        w => unreachable!("no {w}-bit element format exists"),
    }
}

/// A real-valued tensor shipped through the f32 carrier dtype.
#[derive(Debug, Clone, PartialEq)]
pub struct F32Tensor {
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

impl F32Tensor {
    pub fn new(dims: Vec<u32>, data: Vec<f32>) -> Result<Self> {
        let n = checked_len(&dims)?;
        if data.len() != n {
            return Err(SimError::Shape(format!(
                "{} values for dims {:?} (want {})",
                data.len(),
                dims,
                n
            )));
        }
        Ok(F32Tensor { dims, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        out.push(DTYPE_F32);
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        for &x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }
}

/// Any tensor a JKT1 file can hold.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadedTensor {
    Coded(Tensor),
    F32(F32Tensor),
}

impl LoadedTensor {
    pub fn dims(&self) -> &[u32] {
        match self {
            LoadedTensor::Coded(t) => &t.dims,
            LoadedTensor::F32(t) => &t.dims,
        }
    }

    /// The coded tensor, or an error naming the actual payload.
    pub fn into_coded(self) -> Result<Tensor> {
        match self {
            LoadedTensor::Coded(t) => Ok(t),
            LoadedTensor::F32(_) => Err(SimError::TensorFile(
                "file holds f32 carrier data, not element codes".into(),
            )),
        }
    }

    pub fn into_f32(self) -> Result<F32Tensor> {
        match self {
            LoadedTensor::F32(t) => Ok(t),
            LoadedTensor::Coded(t) => Err(SimError::TensorFile(format!(
                "file holds {} codes, not f32 carrier data",
                t.format
            ))),
        }
    }
}

/// Parse a JKT1 stream.
pub fn read_tensor(r: &mut impl Read) -> Result<LoadedTensor> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    parse_tensor(&bytes)
}

/// Parse JKT1 bytes.
pub fn parse_tensor(bytes: &[u8]) -> Result<LoadedTensor> {
    let fail = |msg: &str| SimError::TensorFile(msg.to_string());
    if bytes.len() < 6 {
        return Err(fail("truncated header"));
    }
    if bytes[0..4] != MAGIC {
        return Err(fail("bad magic (expected JKT1)"));
    }
    let dtype = bytes[4];
    let ndim = bytes[5] as usize;
    let mut off = 6;
    if bytes.len() < off + 4 * ndim {
        return Err(fail("truncated dimension list"));
    }
    let mut dims = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        dims.push(u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()));
        off += 4;
    }
    let n = checked_len(&dims)?;
    let body = &bytes[off..];

    if dtype == DTYPE_F32 {
        if body.len() != 4 * n {
            return Err(fail("payload length does not match dims for f32"));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        return Ok(LoadedTensor::F32(F32Tensor { dims, data }));
    }

    let format =
        format_for_dtype(dtype).ok_or_else(|| fail(&format!("unknown dtype id {dtype}")))?;
    let code_bytes = match format.total_bits() {
        4 => n.div_ceil(2),
        8 => n,
        16 => 2 * n,
        _ => unreachable!(),
    };
    let mx_bytes = if format.kind.is_mx() {
        n / format.block_size as usize
    } else {
        0
    };
    if body.len() != code_bytes + mx_bytes {
        return Err(fail(&format!(
            "payload is {} bytes, expected {}",
            body.len(),
            code_bytes + mx_bytes
        )));
    }
    let mut elements = Vec::with_capacity(n);
    match format.total_bits() {
        4 => {
            for i in 0..n {
                let byte = body[i / 2];
                let nib = if i % 2 == 0 { byte & 0xF } else { byte >> 4 };
                elements.push(ScalarCode::new(format, nib as u16));
            }
        }
        8 => {
            for &b in &body[..n] {
                elements.push(ScalarCode::new(format, b as u16));
            }
        }
        16 => {
            for c in body[..2 * n].chunks_exact(2) {
                elements.push(ScalarCode::new(
                    format,
                    u16::from_le_bytes(c.try_into().unwrap()),
                ));
            }
        }
        _ => unreachable!(),
    }
    let tensor = if format.kind.is_mx() {
        let shared = body[code_bytes..].iter().map(|&b| b as i8).collect();
        Tensor::new_mx(format, dims, elements, shared)?
    } else {
        Tensor::new_scalar(format, dims, elements)?
    };
    Ok(LoadedTensor::Coded(tensor))
}

/// The operand element format a mode reads from files.
pub fn check_mode_format(tensor: &Tensor, mode: &Mode) -> Result<()> {
    if tensor.format != mode.element_format {
        return Err(SimError::Shape(format!(
            "tensor encoded as {}, but mode {} expects {}",
            tensor.format, mode.name, mode.element_format
        )));
    }
    Ok(())
}
