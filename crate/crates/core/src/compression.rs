//! Top-s sparsification, uniform quantization and the update wire format.
//!
//! # Wire format
//!
//! All integers little-endian.
//!
//! ```text
//! update  := n_tensors:u16  bits:u8  tensor*
//! tensor  := tensor_id:u16  rank:u8  dim:u32 * rank  nnz:u32
//!            min:f64  max:f64  index:u32 * nnz  levels
//! levels  := nnz values of `bits` bits each, LSB-first, zero-padded to a byte
//! ```
//!
//! When `nnz` equals the element count the index list is omitted (it would be
//! `0..nnz`).

use crate::embedding::ModelParams;
use crate::error::{input, Error, Result};
use crate::objective::ParamGradient;

pub const SUPPORTED_BITS: [u8; 3] = [4, 8, 16];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionConfig {
    /// Percentage of entries kept, in `(0, 100]`.
    pub s: f64,
    /// Quantization bits, one of [`SUPPORTED_BITS`].
    pub bits: u8,
    pub enabled: bool,
}

impl Default for CompressionConfig {
    fn default() -> Self {
        Self {
            s: 10.0,
            bits: 8,
            enabled: true,
        }
    }
}

impl CompressionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s <= 100.0) {
            return input(format!("sparsity percentage {} not in (0, 100]", self.s));
        }
        check_bits(self.bits)
    }
}

fn check_bits(bits: u8) -> Result<()> {
    if SUPPORTED_BITS.contains(&bits) {
        Ok(())
    } else {
        input(format!("unsupported quantization width {bits}"))
    }
}

/// One tensor after sparsification and quantization.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedTensor {
    pub tensor_id: u16,
    pub shape: Vec<u32>,
    pub min_val: f64,
    pub max_val: f64,
    /// Strictly ascending flat indices of the kept entries.
    pub indices: Vec<u32>,
    /// Quantization level of each kept entry, `< 2^bits`.
    pub levels: Vec<u32>,
}

impl CompressedTensor {
    pub fn element_count(&self) -> usize {
        self.shape.iter().map(|&d| d as usize).product()
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedUpdate {
    pub bits: u8,
    pub tensors: Vec<CompressedTensor>,
}

/// `ceil(s/100 * len)`, at least 1 and at most `len`.
pub fn kept_count(len: usize, s: f64) -> usize {
    ((s * len as f64 / 100.0).ceil() as usize).clamp(1, len.max(1))
}

/// Keeps the `kept_count(len, s)` largest-magnitude entries (lower index wins
/// magnitude ties). Returns ascending indices and their values.
pub fn sparsify_top_s(t: &[f64], s: f64) -> (Vec<u32>, Vec<f64>) {
    if t.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let nnz = kept_count(t.len(), s);
    let mut order: Vec<usize> = (0..t.len()).collect();
    order.sort_by(|&a, &b| t[b].abs().total_cmp(&t[a].abs()).then(a.cmp(&b)));
    let mut kept: Vec<usize> = order[..nnz].to_vec();
    kept.sort_unstable();
    let values = kept.iter().map(|&i| t[i]).collect();
    (kept.into_iter().map(|i| i as u32).collect(), values)
}

/// Affine quantization onto `2^bits` levels spanning `[min, max]`, rounding
/// half to even. A constant input maps to all-zero levels.
pub fn quantize(values: &[f64], bits: u8) -> Result<(Vec<u32>, f64, f64)> {
    check_bits(bits)?;
    if values.is_empty() {
        return input("cannot quantize an empty tensor");
    }
    if values.iter().any(|v| !v.is_finite()) {
        return input("cannot quantize non-finite values");
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let top = ((1u32 << bits) - 1) as f64;
    let range = max - min;
    let levels = values
        .iter()
        .map(|&v| {
            if range > 0.0 {
                ((v - min) / range * top).round_ties_even().clamp(0.0, top) as u32
            } else {
                0
            }
        })
        .collect();
    Ok((levels, min, max))
}

pub fn dequantize(levels: &[u32], min_val: f64, max_val: f64, bits: u8) -> Vec<f64> {
    let top = (1u32 << bits) - 1;
    levels
        .iter()
        .map(|&l| {
            if l >= top && max_val > min_val {
                max_val
            } else {
                min_val + (l as f64 / top as f64) * (max_val - min_val)
            }
        })
        .collect()
}

/// Sparsifies then quantizes one flat tensor.
pub fn compress_tensor(
    tensor_id: u16,
    shape: &[usize],
    data: &[f64],
    cfg: &CompressionConfig,
) -> Result<CompressedTensor> {
    cfg.validate()?;
    let count: usize = shape.iter().product();
    if count != data.len() || data.is_empty() {
        return Err(Error::Shape(format!(
            "tensor {tensor_id}: shape {shape:?} but {} values",
            data.len()
        )));
    }
    let (indices, values) = sparsify_top_s(data, cfg.s);
    let (levels, min_val, max_val) = quantize(&values, cfg.bits)?;
    Ok(CompressedTensor {
        tensor_id,
        shape: shape.iter().map(|&d| d as u32).collect(),
        min_val,
        max_val,
        indices,
        levels,
    })
}

/// Dense reconstruction with dropped entries set to zero.
pub fn decompress_tensor(t: &CompressedTensor, bits: u8) -> Vec<f64> {
    let mut out = vec![0.0; t.element_count()];
    for (&i, v) in t
        .indices
        .iter()
        .zip(dequantize(&t.levels, t.min_val, t.max_val, bits))
    {
        out[i as usize] = v;
    }
    out
}

/// Compresses every tensor of a parameter update, in wire order.
pub fn compress_update(delta: &ParamGradient, shapes: &[Vec<usize>], cfg: &CompressionConfig) -> Result<CompressedUpdate> {
    let tensors = delta
        .tensors()
        .into_iter()
        .zip(shapes)
        .enumerate()
        .map(|(id, (data, shape))| compress_tensor(id as u16, shape, data, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(CompressedUpdate {
        bits: cfg.bits,
        tensors,
    })
}

/// Rebuilds a dense update shaped like `like`.
pub fn decompress_update(u: &CompressedUpdate, like: &ModelParams) -> Result<ParamGradient> {
    let mut out = ParamGradient::zeros_like(like);
    let mut slots = out.tensors_mut();
    if slots.len() != u.tensors.len() {
        return Err(Error::Shape(format!(
            "update has {} tensors, model has {}",
            u.tensors.len(),
            slots.len()
        )));
    }
    for t in &u.tensors {
        let slot = slots
            .get_mut(t.tensor_id as usize)
            .ok_or_else(|| Error::Shape(format!("unknown tensor id {}", t.tensor_id)))?;
        if slot.len() != t.element_count() {
            return Err(Error::Shape(format!("tensor {} size mismatch", t.tensor_id)));
        }
        slot.copy_from_slice(&decompress_tensor(t, u.bits));
    }
    Ok(out)
}

fn pack_levels(levels: &[u32], bits: u8, out: &mut Vec<u8>) {
    let start = out.len();
    let total_bits = levels.len() * bits as usize;
    out.resize(start + total_bits.div_ceil(8), 0);
    for (n, &level) in levels.iter().enumerate() {
        for b in 0..bits as usize {
            if (level >> b) & 1 == 1 {
                let pos = n * bits as usize + b;
                out[start + pos / 8] |= 1 << (pos % 8);
            }
        }
    }
}

pub fn encode_update(u: &CompressedUpdate) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(u.tensors.len() as u16).to_le_bytes());
    out.push(u.bits);
    for t in &u.tensors {
        out.extend_from_slice(&t.tensor_id.to_le_bytes());
        out.push(t.shape.len() as u8);
        for &d in &t.shape {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend_from_slice(&(t.nnz() as u32).to_le_bytes());
        out.extend_from_slice(&t.min_val.to_le_bytes());
        out.extend_from_slice(&t.max_val.to_le_bytes());
        if t.nnz() != t.element_count() {
            for &i in &t.indices {
                out.extend_from_slice(&i.to_le_bytes());
            }
        }
        pack_levels(&t.levels, u.bits, &mut out);
    }
    out
}

/// Encoded size without building the buffer.
pub fn encoded_len(u: &CompressedUpdate) -> usize {
    3 + u
        .tensors
        .iter()
        .map(|t| {
            let idx = if t.nnz() == t.element_count() { 0 } else { 4 * t.nnz() };
            2 + 1 + 4 * t.shape.len() + 4 + 16 + idx + (t.nnz() * u.bits as usize).div_ceil(8)
        })
        .sum::<usize>()
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Decode {
                offset: self.pos,
                msg: format!("truncated while reading {what}"),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn fail<T>(&self, at: usize, msg: impl Into<String>) -> Result<T> {
        Err(Error::Decode {
            offset: at,
            msg: msg.into(),
        })
    }
}

pub fn decode_update(buf: &[u8]) -> Result<CompressedUpdate> {
    let mut r = Reader { buf, pos: 0 };
    let n_tensors = r.u16("tensor count")?;
    let bits_at = r.pos;
    let bits = r.u8("bit width")?;
    if !SUPPORTED_BITS.contains(&bits) {
        return r.fail(bits_at, format!("unsupported bit width {bits}"));
    }
    let mut tensors = Vec::with_capacity(n_tensors as usize);
    for _ in 0..n_tensors {
        let tensor_id = r.u16("tensor id")?;
        let rank = r.u8("rank")?;
        let shape = (0..rank)
            .map(|_| r.u32("dimension"))
            .collect::<Result<Vec<_>>>()?;
        let count: u64 = shape.iter().map(|&d| d as u64).product();
        let nnz_at = r.pos;
        let nnz = r.u32("nnz")? as u64;
        if nnz > count {
            return r.fail(nnz_at, format!("nnz {nnz} exceeds element count {count}"));
        }
        let range_at = r.pos;
        let min_val = r.f64("min")?;
        let max_val = r.f64("max")?;
        if !(min_val.is_finite() && max_val.is_finite() && min_val <= max_val) {
            return r.fail(range_at, "invalid quantization range");
        }
        let indices = if nnz == count {
            (0..nnz as u32).collect()
        } else {
            let mut idx = Vec::with_capacity(nnz as usize);
            for _ in 0..nnz {
                let at = r.pos;
                let i = r.u32("index")?;
                if i as u64 >= count || idx.last().is_some_and(|&p| p >= i) {
                    return r.fail(at, format!("index {i} out of order or range"));
                }
                idx.push(i);
            }
            idx
        };
        let packed = r.take((nnz as usize * bits as usize).div_ceil(8), "levels")?;
        let levels = (0..nnz as usize)
            .map(|n| {
                (0..bits as usize).fold(0u32, |acc, b| {
                    let pos = n * bits as usize + b;
                    acc | ((((packed[pos / 8] >> (pos % 8)) & 1) as u32) << b)
                })
            })
            .collect();
        tensors.push(CompressedTensor {
            tensor_id,
            shape,
            min_val,
            max_val,
            indices,
            levels,
        });
    }
    if r.pos != buf.len() {
        return r.fail(r.pos, "trailing bytes after last tensor");
    }
    Ok(CompressedUpdate { bits, tensors })
}
