//! Supervised contrastive embeddings and the pairwise distance cache built on
//! them.

mod cache;
mod supcon;
mod table;

pub use cache::{euclidean, pairwise_distances, CacheStats, DistanceCache};
pub use supcon::{encoder, supcon_loss, train_supcon, AnchorWeighting, SupConConfig};
pub use table::{embed_all, encoder_fingerprint, EmbeddingTable};
