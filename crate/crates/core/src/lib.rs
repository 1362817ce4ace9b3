//! Bias-aware dataset distillation.
//!
//! Builds bias-injected toy datasets, trains a supervised-contrastive encoder,
//! turns embedding-space kernel density estimates into per-sample weights, and
//! uses those weights inside distribution-matching and gradient-matching
//! distillation loops.

pub mod augment;
pub mod cli;
pub mod config;
pub mod data;
pub mod distill;
pub mod embed;
pub mod error;
pub mod eval;
pub mod kde;
pub mod nn;
pub mod tensor;

#[cfg(test)]
mod test_util;

pub use error::{Error, Result};
pub use tensor::Tensor;
