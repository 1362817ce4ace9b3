use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::DistillConfig;
use super::synthetic::{DistillOutput, LossTrace, PixelOptimizer, SyntheticSet, TraceRow};
use super::weighting::{sample_class, Weighting};
use crate::augment::AugmentationParams;
use crate::data::TrainingSet;
use crate::embed::EmbeddingTable;
use crate::error::{Error, Result};
use crate::nn::{FeatureNet, Graph};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct DmLoss {
    pub loss: f64,
    /// Gradient with respect to the un-augmented synthetic pixels.
    pub syn_grad: Tensor,
}

/// `|| sum_i w_i psi(A(x_i)) - mean_j psi(A(s_j)) ||^2`, with the plain real
/// mean when `weights` is `None`.
pub fn dm_loss(
    net: &FeatureNet,
    real: &Tensor,
    syn: &Tensor,
    weights: Option<&[f64]>,
    aug: &AugmentationParams,
) -> Result<DmLoss> {
    let n = real.batch();
    if let Some(w) = weights {
        if w.len() != n {
            return Err(Error::Length {
                what: "real batch weights",
                expected: n,
                found: w.len(),
            });
        }
    }
    let real_emb = net.infer(&aug.apply(real)?)?;
    let d = real_emb.sample_len();
    let mut target = vec![0.0; d];
    match weights {
        Some(w) => {
            for (row, &wi) in real_emb.data().chunks_exact(d).zip(w) {
                for (t, v) in target.iter_mut().zip(row) {
                    *t += wi * v;
                }
            }
        }
        None => {
            for row in real_emb.data().chunks_exact(d) {
                for (t, v) in target.iter_mut().zip(row) {
                    *t += v;
                }
            }
            for t in &mut target {
                *t /= n as f64;
            }
        }
    }

    let mut graph = Graph::new(net);
    let syn_emb = graph.forward(&aug.apply(syn)?)?;
    let m = syn.batch();
    let mut syn_mean = vec![0.0; d];
    for row in syn_emb.data().chunks_exact(d) {
        for (t, v) in syn_mean.iter_mut().zip(row) {
            *t += v;
        }
    }
    let diff: Vec<f64> = target.iter().zip(&syn_mean).map(|(t, s)| t - s / m as f64).collect();
    let loss = diff.iter().map(|v| v * v).sum::<f64>();
    let row_grad: Vec<f64> = diff.iter().map(|v| -2.0 * v / m as f64).collect();
    let out_grad = Tensor::new(vec![m, d], row_grad.repeat(m))?;
    let g = graph.backward_inputs(&out_grad)?;
    let syn_grad = aug.adjoint(&g)?;
    syn_grad.ensure_finite("distribution-matching pixel gradient")?;
    Ok(DmLoss { loss, syn_grad })
}

/// Distribution matching with KDE weights when `cfg.kde` is set.
pub fn distill_dm(train: &TrainingSet, cfg: &DistillConfig, embeddings: Option<&EmbeddingTable>) -> Result<DistillOutput> {
    let weighting = Weighting::from_config(train, cfg, embeddings)?;
    distill_dm_with(train, cfg, weighting)
}

pub fn distill_dm_with(train: &TrainingSet, cfg: &DistillConfig, mut weighting: Weighting) -> Result<DistillOutput> {
    cfg.validate()?;
    let shape = train.shape();
    let classes = train.classes();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut syn = SyntheticSet::noise(shape, classes, cfg.ipc, &mut rng);
    let mut opt = PixelOptimizer::new(cfg.lr_pixels, cfg.momentum, syn.pixels().len());
    let members = train.class_indices();
    let mut trace = LossTrace::default();
    for iteration in 0..cfg.iterations {
        let net = FeatureNet::convnet(shape, cfg.width, cfg.depth, rng.gen())?;
        for (class, m) in members.iter().enumerate() {
            if m.is_empty() {
                continue;
            }
            let idx = sample_class(m, cfg.batch_real, &mut rng);
            let aug = AugmentationParams::sample(cfg.augment, shape, &mut rng);
            let weights = weighting.weights(&idx)?;
            let real = train.batch(&idx)?;
            let step = dm_loss(&net, &real, &syn.class_batch(class), weights.as_deref(), &aug)?;
            opt.step(&mut syn, class, step.syn_grad.data())?;
            trace.rows.push(TraceRow {
                iteration,
                class,
                loss: step.loss,
            });
        }
        if iteration % 100 == 0 {
            debug!("dm iteration {iteration}: loss {:.6}", trace.totals()[iteration]);
        }
    }
    Ok(DistillOutput { synthetic: syn, trace })
}
