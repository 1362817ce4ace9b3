use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::TrainingSet;
use crate::embed::{DistanceCache, EmbeddingTable};
use crate::error::{Error, Result};
use crate::kde::{batch_weights, KdeConfig, WeightScope};

use super::config::DistillConfig;

/// Where the weights of a real class batch come from.
pub enum Weighting<'a> {
    /// Plain mean over the batch.
    Vanilla,
    /// Explicit weights `1/n`; numerically equivalent to [`Weighting::Vanilla`].
    Uniform,
    Kde {
        table: &'a EmbeddingTable,
        config: KdeConfig,
        cache: DistanceCache,
    },
}

impl<'a> Weighting<'a> {
    /// KDE weighting when `cfg.kde` is set, vanilla otherwise. The embedding
    /// table must have been computed on `train`.
    pub fn from_config(train: &TrainingSet, cfg: &DistillConfig, embeddings: Option<&'a EmbeddingTable>) -> Result<Self> {
        let Some(config) = cfg.kde.clone() else {
            return Ok(Weighting::Vanilla);
        };
        let table = embeddings.ok_or_else(|| {
            Error::Config("kde reweighting is enabled but no embedding table was supplied; run `embed` first".into())
        })?;
        table.check_dataset(train)?;
        Ok(Weighting::Kde {
            table,
            config,
            cache: DistanceCache::new(table),
        })
    }

    pub fn is_vanilla(&self) -> bool {
        matches!(self, Weighting::Vanilla)
    }

    pub fn weights(&mut self, indices: &[usize]) -> Result<Option<Vec<f64>>> {
        match self {
            Weighting::Vanilla => Ok(None),
            Weighting::Uniform => Ok(Some(vec![1.0 / indices.len() as f64; indices.len()])),
            Weighting::Kde { table, config, cache } => {
                Ok(Some(batch_weights(table, indices, config, Some(cache))?.weights))
            }
        }
    }

    pub fn scope(&self) -> WeightScope {
        match self {
            Weighting::Kde { config, .. } => config.scope,
            _ => WeightScope::PerClassBatch,
        }
    }
}

/// Draws up to `batch` indices of one class without replacement.
pub(crate) fn sample_class(members: &[usize], batch: usize, rng: &mut impl Rng) -> Vec<usize> {
    members.choose_multiple(rng, batch).copied().collect()
}
