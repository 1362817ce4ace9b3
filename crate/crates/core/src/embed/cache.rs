use std::fs;
use std::path::Path;

use super::table::EmbeddingTable;
use crate::error::{Error, Result};

const CACHE_MAGIC: &[u8; 8] = b"KDDST001";

/// Euclidean distance between two rows. Symmetric bit-for-bit.
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Dense `n x n` distance matrix over `indices`, computed directly.
pub fn pairwise_distances(table: &EmbeddingTable, indices: &[usize]) -> Result<Vec<f64>> {
    check_indices(table, indices)?;
    let n = indices.len();
    let mut out = vec![0.0; n * n];
    for p in 0..n {
        for q in p + 1..n {
            let d = euclidean(table.row(indices[p]), table.row(indices[q]));
            out[p * n + q] = d;
            out[q * n + p] = d;
        }
    }
    Ok(out)
}

fn check_indices(table: &EmbeddingTable, indices: &[usize]) -> Result<()> {
    match indices.iter().find(|&&i| i >= table.len()) {
        Some(&index) => Err(Error::Index {
            index,
            len: table.len(),
        }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: u64,
    pub computed: u64,
}

#[derive(Debug, Clone, PartialEq)]
struct Shard {
    members: Vec<usize>,
    /// Strict upper triangle, row-major; NaN marks an entry not yet computed.
    upper: Vec<f64>,
}

impl Shard {
    fn slot(&self, a: usize, b: usize) -> usize {
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        let m = self.members.len();
        a * m - a * (a + 1) / 2 + (b - a - 1)
    }
}

/// Lazily filled pairwise distances, sharded by group (one shard per class by
/// default). Queries must stay inside one shard.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceCache {
    fingerprint: String,
    n: usize,
    dim: usize,
    shards: Vec<Shard>,
    /// `(shard, position within shard)` of every table row.
    location: Vec<(usize, usize)>,
    stats: CacheStats,
}

impl DistanceCache {
    /// One shard per class label.
    pub fn new(table: &EmbeddingTable) -> Self {
        let classes = table.labels.iter().max().map_or(0, |m| m + 1);
        let mut groups = vec![Vec::new(); classes];
        for (k, &l) in table.labels.iter().enumerate() {
            groups[l].push(k);
        }
        Self::with_groups(table, groups).expect("class groups partition the table")
    }

    /// Shards given by an explicit partition of the table rows.
    pub fn with_groups(table: &EmbeddingTable, groups: Vec<Vec<usize>>) -> Result<Self> {
        let mut location = vec![(usize::MAX, 0); table.len()];
        for (s, g) in groups.iter().enumerate() {
            for (pos, &k) in g.iter().enumerate() {
                check_indices(table, &[k])?;
                if location[k].0 != usize::MAX {
                    return Err(Error::Config(format!("row {k} appears in two cache groups")));
                }
                location[k] = (s, pos);
            }
        }
        if let Some(k) = location.iter().position(|l| l.0 == usize::MAX) {
            return Err(Error::Config(format!("row {k} is in no cache group")));
        }
        let shards = groups
            .into_iter()
            .map(|members| {
                let m = members.len();
                Shard {
                    members,
                    upper: vec![f64::NAN; m * m.saturating_sub(1) / 2],
                }
            })
            .collect();
        Ok(DistanceCache {
            fingerprint: table.encoder_fingerprint.clone(),
            n: table.len(),
            dim: table.dim,
            shards,
            location,
            stats: CacheStats::default(),
        })
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }

    pub fn reset_stats(&mut self) {
        self.stats = CacheStats::default();
    }

    fn check_table(&self, table: &EmbeddingTable) -> Result<()> {
        if table.encoder_fingerprint != self.fingerprint || table.len() != self.n || table.dim != self.dim {
            return Err(Error::Fingerprint {
                expected: self.fingerprint.clone(),
                found: table.encoder_fingerprint.clone(),
            });
        }
        Ok(())
    }

    /// Dense `n x n` distance matrix over `indices`, filling missing entries.
    /// Values are bit-identical to [`pairwise_distances`].
    pub fn distances(&mut self, table: &EmbeddingTable, indices: &[usize]) -> Result<Vec<f64>> {
        self.check_table(table)?;
        check_indices(table, indices)?;
        let Some(&first) = indices.first() else {
            return Ok(Vec::new());
        };
        let shard_id = self.location[first].0;
        if let Some(&other) = indices.iter().find(|&&i| self.location[i].0 != shard_id) {
            return Err(Error::CrossShard(first, other));
        }
        let n = indices.len();
        let mut out = vec![0.0; n * n];
        let shard = &mut self.shards[shard_id];
        for p in 0..n {
            for q in p + 1..n {
                let (a, b) = (self.location[indices[p]].1, self.location[indices[q]].1);
                if a == b {
                    continue;
                }
                let slot = shard.slot(a, b);
                let mut d = shard.upper[slot];
                if d.is_nan() {
                    let (lo, hi) = if indices[p] < indices[q] {
                        (indices[p], indices[q])
                    } else {
                        (indices[q], indices[p])
                    };
                    d = euclidean(table.row(lo), table.row(hi));
                    shard.upper[slot] = d;
                    self.stats.computed += 1;
                } else {
                    self.stats.hits += 1;
                }
                out[p * n + q] = d;
                out[q * n + p] = d;
            }
        }
        Ok(out)
    }

    /// Computes every entry of every shard.
    pub fn fill(&mut self, table: &EmbeddingTable) -> Result<()> {
        for s in 0..self.shards.len() {
            let members = self.shards[s].members.clone();
            self.distances(table, &members)?;
        }
        Ok(())
    }

    /// Layout: magic, u64 header length, JSON header (fingerprint, n, dim,
    /// groups), then every shard's upper triangle as f64 little-endian.
    pub fn save(&self, path: &Path) -> Result<()> {
        let groups: Vec<&Vec<usize>> = self.shards.iter().map(|s| &s.members).collect();
        let header = serde_json::to_vec(&serde_json::json!({
            "fingerprint": self.fingerprint,
            "n": self.n,
            "dim": self.dim,
            "groups": groups,
        }))?;
        let mut bytes = Vec::new();
        bytes.extend_from_slice(CACHE_MAGIC);
        bytes.extend_from_slice(&(header.len() as u64).to_le_bytes());
        bytes.extend_from_slice(&header);
        for s in &self.shards {
            for v in &s.upper {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(path, bytes)?;
        Ok(())
    }

    /// Loads a cache and checks it against `table`.
    pub fn load(path: &Path, table: &EmbeddingTable) -> Result<Self> {
        #[derive(serde::Deserialize)]
        struct Header {
            fingerprint: String,
            n: usize,
            dim: usize,
            groups: Vec<Vec<usize>>,
        }
        let bytes = fs::read(path)?;
        if bytes.len() < 16 || &bytes[..8] != CACHE_MAGIC {
            return Err(Error::format(path, "not a distance cache"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = bytes
            .get(16..16 + hlen)
            .ok_or_else(|| Error::format(path, "truncated header"))?;
        let header: Header = serde_json::from_slice(body)?;
        if header.fingerprint != table.encoder_fingerprint || header.n != table.len() || header.dim != table.dim {
            return Err(Error::Fingerprint {
                expected: table.encoder_fingerprint.clone(),
                found: header.fingerprint,
            });
        }
        let mut cache = Self::with_groups(table, header.groups)?;
        let mut values = bytes[16 + hlen..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let expected: usize = cache.shards.iter().map(|s| s.upper.len()).sum();
        if bytes.len() - 16 - hlen != 8 * expected {
            return Err(Error::format(path, "payload length disagrees with header"));
        }
        for s in &mut cache.shards {
            for v in &mut s.upper {
                *v = values.next().unwrap();
            }
        }
        Ok(cache)
    }
}
