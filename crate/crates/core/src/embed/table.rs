use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{hex_digest, TrainingSet};
use crate::error::{Error, Result};
use crate::nn::FeatureNet;

const TABLE_MAGIC: &[u8; 8] = b"KDEMB001";

/// SHA-256 over the layer descriptors, input shape and parameter bits.
pub fn encoder_fingerprint(net: &FeatureNet) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&(net.input_shape(), net.layers())).expect("layers serialize"));
    for p in net.params() {
        h.update(p.to_le_bytes());
    }
    hex_digest(h)
}

/// Unit-norm embeddings of every training sample, row `k` for sample
/// `index_map[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub dim: usize,
    #[serde(skip)]
    pub vectors: Vec<f64>,
    pub index_map: Vec<usize>,
    pub labels: Vec<usize>,
    pub encoder_fingerprint: String,
    pub dataset_digest: String,
}

impl EmbeddingTable {
    pub fn len(&self) -> usize {
        self.index_map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_map.is_empty()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.vectors[k * self.dim..(k + 1) * self.dim]
    }

    pub fn check_dataset(&self, train: &TrainingSet) -> Result<()> {
        let digest = train.digest();
        if digest != self.dataset_digest {
            return Err(Error::Fingerprint {
                expected: self.dataset_digest.clone(),
                found: digest,
            });
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = serde_json::to_vec(self)?;
        let mut bytes = Vec::with_capacity(16 + header.len() + 8 * self.vectors.len());
        bytes.extend_from_slice(TABLE_MAGIC);
        bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
        bytes.extend_from_slice(&header);
        for v in &self.vectors {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(path, bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        if bytes.len() < 16 || &bytes[..8] != TABLE_MAGIC {
            return Err(Error::format(path, "not an embedding table"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = bytes
            .get(16..16 + hlen)
            .ok_or_else(|| Error::format(path, "truncated header"))?;
        let mut table: EmbeddingTable = serde_json::from_slice(body)?;
        let payload = &bytes[16 + hlen..];
        if payload.len() != 8 * table.len() * table.dim {
            return Err(Error::format(path, "payload length disagrees with header"));
        }
        table.vectors = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(table)
    }
}

/// Projects every sample and L2-normalizes each row.
pub fn embed_all(encoder: &FeatureNet, train: &TrainingSet) -> Result<EmbeddingTable> {
    let dim = encoder.output_len();
    let mut vectors = Vec::with_capacity(train.len() * dim);
    let all: Vec<usize> = (0..train.len()).collect();
    for chunk in all.chunks(256) {
        let out = encoder.infer(&train.batch(chunk)?).map_err(|e| match e {
            Error::NonFinite(_) => Error::NonFinite(format!("embedding of samples {}..={}", chunk[0], chunk[chunk.len() - 1])),
            e => e,
        })?;
        for (k, row) in out.data().chunks_exact(dim).enumerate() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !norm.is_finite() || norm == 0.0 {
                return Err(Error::NonFinite(format!("embedding of sample {}", chunk[k])));
            }
            vectors.extend(row.iter().map(|v| v / norm));
        }
    }
    Ok(EmbeddingTable {
        dim,
        vectors,
        index_map: all,
        labels: train.labels().to_vec(),
        encoder_fingerprint: encoder_fingerprint(encoder),
        dataset_digest: train.digest(),
    })
}
