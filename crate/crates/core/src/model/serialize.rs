//! Binary weight container.
//!
//! Layout (all integers little-endian):
//!
//! | bytes | content |
//! |-------|---------|
//! | 4     | magic `RSDW` |
//! | 4     | format version, `u32` = 1 |
//! | 1     | dtype: 0 = f64, 1 = f32 |
//! | 4     | config length `n`, `u32` |
//! | n     | `ModelConfig` as UTF-8 JSON |
//! | 4     | tensor count, `u32` |
//!
//! then per tensor in declaration order: rank `u8`, `rank` extents as `u32`,
//! then the elements row-major as little-endian IEEE scalars.
//!
//! The JSON sidecar lists each tensor's name, shape and byte offset.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{DType, Scalar, Tensor};

use super::config::ModelConfig;
use super::weights::{layout, ModelWeights};

pub const MAGIC: [u8; 4] = *b"RSDW";
pub const FORMAT_VERSION: u32 = 1;

/// Scalars with a fixed little-endian encoding.
pub trait LeBytes: Scalar {
    const WIDTH: usize;
    const TAG: u8;
    fn put(self, out: &mut Vec<u8>);
    fn get(bytes: &[u8]) -> Self;
}

impl LeBytes for f64 {
    const WIDTH: usize = 8;
    const TAG: u8 = 0;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

impl LeBytes for f32 {
    const WIDTH: usize = 4;
    const TAG: u8 = 1;
    fn put(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn get(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset of the tensor record (its rank byte).
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format: String,
    pub version: u32,
    pub dtype: DType,
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
}

pub fn encode_weights<T: LeBytes>(
    config: &ModelConfig,
    weights: &ModelWeights<T>,
) -> Result<(Vec<u8>, Sidecar)> {
    let cfg = serde_json::to_vec(config).map_err(|e| Error::Format(e.to_string()))?;
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(T::TAG);
    out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    out.extend_from_slice(&cfg);
    let tensors = weights.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    let slots = layout(config);
    if slots.len() != tensors.len() {
        return Err(Error::Config(
            "weights do not match the configuration layout".into(),
        ));
    }
    let mut entries = Vec::with_capacity(tensors.len());
    for (slot, t) in slots.into_iter().zip(tensors) {
        entries.push(TensorEntry {
            name: slot.name,
            shape: t.shape().to_vec(),
            offset: out.len(),
        });
        out.push(t.rank() as u8);
        for &e in t.shape() {
            out.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for &v in t.data() {
            v.put(&mut out);
        }
    }
    let sidecar = Sidecar {
        format: "resdual-weights".into(),
        version: FORMAT_VERSION,
        dtype: T::DTYPE,
        config: config.clone(),
        tensors: entries,
    };
    Ok((out, sidecar))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

pub fn decode_weights<T: LeBytes>(bytes: &[u8]) -> Result<(ModelConfig, ModelWeights<T>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let tag = r.u8()?;
    if tag != T::TAG {
        return Err(Error::Format(format!(
            "dtype tag {tag} does not match {}",
            T::DTYPE
        )));
    }
    let n = r.u32()? as usize;
    let config: ModelConfig =
        serde_json::from_slice(r.take(n)?).map_err(|e| Error::Format(e.to_string()))?;
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let rank = r.u8()? as usize;
        let shape = (0..rank)
            .map(|_| r.u32().map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let raw = r.take(
            len.checked_mul(T::WIDTH)
                .ok_or_else(|| Error::Format("size overflow".into()))?,
        )?;
        let data = raw.chunks_exact(T::WIDTH).map(T::get).collect();
        tensors.push(Tensor::new(&shape, data)?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    let weights = ModelWeights::from_tensors(&config, tensors)?;
    Ok((config, weights))
}
