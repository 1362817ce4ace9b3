//! Parameter checkpoints: magic, JSON layer descriptors, little-endian f32 payload.
//!
//! ```text
//! b"KDNET001"                      8 bytes
//! descriptor length (u32 LE)       4 bytes
//! descriptor JSON                  {input_shape, layers, init_seed}
//! parameter count (u64 LE)         8 bytes
//! parameters (f32 LE)              4 * count bytes
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::layer::Layer;
use super::net::FeatureNet;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"KDNET001";

#[derive(Serialize, Deserialize)]
struct Descriptor {
    input_shape: Vec<usize>,
    layers: Vec<Layer>,
    init_seed: u64,
}

pub fn encode_checkpoint(net: &FeatureNet) -> Result<Vec<u8>> {
    let desc = serde_json::to_vec(&Descriptor {
        input_shape: net.input_shape().to_vec(),
        layers: net.layers().to_vec(),
        init_seed: net.init_seed(),
    })?;
    let mut out = Vec::with_capacity(24 + desc.len() + 4 * net.param_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&(desc.len() as u32).to_le_bytes());
    out.extend_from_slice(&desc);
    out.extend_from_slice(&(net.param_count() as u64).to_le_bytes());
    for &p in net.params() {
        out.extend_from_slice(&(p as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8], origin: &Path) -> Result<FeatureNet> {
    let bad = |reason: &str| Error::format(origin, reason);
    if bytes.len() < 12 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("missing checkpoint magic"));
    }
    let dlen = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let desc_end = 12 + dlen;
    if bytes.len() < desc_end + 8 {
        return Err(bad("truncated descriptor"));
    }
    let desc: Descriptor = serde_json::from_slice(&bytes[12..desc_end])?;
    let count = u64::from_le_bytes(bytes[desc_end..desc_end + 8].try_into().unwrap()) as usize;
    let payload = &bytes[desc_end + 8..];
    if payload.len() != 4 * count {
        return Err(bad("parameter payload length does not match count"));
    }
    let params = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    FeatureNet::from_parts(desc.input_shape, desc.layers, params, desc.init_seed)
}

pub fn save_checkpoint(net: &FeatureNet, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(net)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<FeatureNet> {
    decode_checkpoint(&fs::read(path)?, path)
}
