//! Binary model file.
//!
//! ```text
//! "GMD1" | version: u16 LE | representation: u8 | header length: u32 LE
//! | ModelConfig as JSON | f32 LE tensors in plan order | CRC32 (u32 LE)
//! ```
//!
//! Tensor order per layer: conv kernel, bias; batch norm gamma, beta,
//! running mean, running variance; dense weights, bias. The CRC covers
//! every byte before it.

use std::path::Path;

use super::model::{Layer, ModelConfig, Network};
use super::GaitModel;
use crate::error::{Error, Result};
use crate::labels::Representation;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"GMD1";
pub const VERSION: u16 = 1;
/// Bytes after the JSON header: the CRC32.
pub const TRAILER_LEN: usize = 4;

fn tensors(net: &Network<f32>) -> Vec<&Tensor<f32>> {
    let mut out = Vec::new();
    for l in net.layers() {
        match l {
            Layer::Conv2d(c) => out.extend([&c.kernel, &c.bias]),
            Layer::BatchNorm(b) => out.extend([&b.gamma, &b.beta, &b.running_mean, &b.running_var]),
            Layer::Dense(d) => out.extend([&d.weights, &d.bias]),
            _ => {}
        }
    }
    out
}

fn tensors_mut(net: &mut Network<f32>) -> Vec<&mut Tensor<f32>> {
    let mut out = Vec::new();
    for l in net.layers_mut() {
        match l {
            Layer::Conv2d(c) => out.extend([&mut c.kernel, &mut c.bias]),
            Layer::BatchNorm(b) => out.extend([
                &mut b.gamma,
                &mut b.beta,
                &mut b.running_mean,
                &mut b.running_var,
            ]),
            Layer::Dense(d) => out.extend([&mut d.weights, &mut d.bias]),
            _ => {}
        }
    }
    out
}

/// Length of everything before the tensor blobs.
pub fn header_len(config: &ModelConfig) -> Result<usize> {
    Ok(4 + 2 + 1 + 4 + serde_json::to_vec(config)?.len())
}

pub fn to_bytes(model: &GaitModel) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(model.network.config())?;
    let header_size = u32::try_from(header.len())
        .map_err(|_| Error::ModelFormat("config header too large".into()))?;
    let body: usize = tensors(&model.network).iter().map(|t| t.len() * 4).sum();
    let mut out = Vec::with_capacity(11 + header.len() + body + TRAILER_LEN);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(model.representation.code());
    out.extend_from_slice(&header_size.to_le_bytes());
    out.extend_from_slice(&header);
    for t in tensors(&model.network) {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<GaitModel> {
    let truncated = || Error::ModelFormat("file is truncated".into());
    if bytes.len() < 11 + TRAILER_LEN {
        return Err(truncated());
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::ModelFormat(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..4]),
            "GMD1"
        )));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::ModelFormat(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let representation = Representation::from_code(bytes[6])?;
    let hlen = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
    let body_start = 11usize.checked_add(hlen).ok_or_else(truncated)?;
    if bytes.len() < body_start + TRAILER_LEN {
        return Err(truncated());
    }
    let config: ModelConfig = serde_json::from_slice(&bytes[11..body_start])
        .map_err(|e| Error::ModelFormat(format!("config header: {e}")))?;
    let mut network = Network::<f32>::build(config, 0)?;
    let expected: usize = tensors(&network).iter().map(|t| t.len() * 4).sum();
    let crc_at = body_start + expected;
    if bytes.len() < crc_at + TRAILER_LEN {
        return Err(truncated());
    }
    if bytes.len() > crc_at + TRAILER_LEN {
        return Err(Error::ModelFormat(format!(
            "{} unexpected trailing bytes",
            bytes.len() - crc_at - TRAILER_LEN
        )));
    }
    let stored = u32::from_le_bytes(bytes[crc_at..crc_at + 4].try_into().unwrap());
    let actual = crc32fast::hash(&bytes[..crc_at]);
    if stored != actual {
        return Err(Error::ModelFormat(format!(
            "checksum mismatch: stored {stored:08x}, computed {actual:08x}"
        )));
    }
    let mut pos = body_start;
    for t in tensors_mut(&mut network) {
        for v in t.data_mut() {
            *v = f32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap());
            pos += 4;
        }
    }
    Ok(GaitModel {
        representation,
        network,
    })
}

pub fn save_model(model: &GaitModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = to_bytes(model)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<GaitModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

/// Exact serialized size of `model`.
pub fn file_size(model: &GaitModel) -> Result<usize> {
    Ok(header_len(model.network.config())?
        + 4 * model.network.parameter_count()
        + TRAILER_LEN)
}
