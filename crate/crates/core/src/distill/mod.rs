//! Distillation loops: distribution matching under random feature nets and
//! gradient matching on a shallow surrogate, each optionally driven by
//! per-sample KDE weights.

mod config;
mod dm;
mod dsa;
mod synthetic;
mod weighting;

pub use config::{DistillConfig, DsaConfig, SurrogateKind};
pub use dm::{distill_dm, distill_dm_with, dm_loss, DmLoss};
pub use dsa::{distill_dsa, distill_dsa_with, dsa_step, ClassBatch, SurrogateState};
pub use synthetic::{DistillOutput, LossTrace, PixelOptimizer, SyntheticSet, TraceRow};
pub use weighting::Weighting;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dm,
    Dsa,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Dm => "dm",
            Method::Dsa => "dsa",
        }
    }
}

/// Runs the selected loop.
pub fn distill(
    method: Method,
    train: &crate::data::TrainingSet,
    cfg: &DistillConfig,
    embeddings: Option<&crate::embed::EmbeddingTable>,
) -> crate::Result<DistillOutput> {
    match method {
        Method::Dm => distill_dm(train, cfg, embeddings),
        Method::Dsa => distill_dsa(train, cfg, embeddings),
    }
}
