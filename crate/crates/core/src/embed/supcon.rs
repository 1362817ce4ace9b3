use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::TrainingSet;
use crate::error::{Error, Result};
use crate::nn::{embed_len, FeatureNet, Graph, Layer, Sgd};
use crate::tensor::Tensor;

/// Per-anchor weighting of the contrastive loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnchorWeighting {
    #[default]
    Uniform,
    /// Reserved for a generalized-cross-entropy style weighting; rejected.
    Gce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupConConfig {
    pub width: usize,
    pub depth: usize,
    pub hidden: usize,
    pub projection_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub momentum: f64,
    pub temperature: f64,
    pub anchor_weighting: AnchorWeighting,
    /// Set from the run-level seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for SupConConfig {
    fn default() -> Self {
        SupConConfig {
            width: 16,
            depth: 3,
            hidden: 128,
            projection_dim: 128,
            epochs: 10,
            batch_size: 128,
            lr: 0.002,
            momentum: 0.9,
            temperature: 0.1,
            anchor_weighting: AnchorWeighting::Uniform,
            seed: 0,
        }
    }
}

impl SupConConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::Config(format!(
                "contrastive temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.batch_size < 2 || !(self.lr > 0.0) || self.width == 0 || self.projection_dim == 0 {
            return Err(Error::Config(
                "contrastive batch_size must be at least 2 and lr, width, projection_dim positive".into(),
            ));
        }
        if self.anchor_weighting == AnchorWeighting::Gce {
            return Err(Error::Unsupported(
                "gce anchor weighting is reserved and not implemented; use `uniform`".into(),
            ));
        }
        Ok(())
    }
}

/// Conv blocks followed by a dense-relu-dense projection head.
pub fn encoder(input_shape: [usize; 3], cfg: &SupConConfig) -> Result<FeatureNet> {
    let mut net = FeatureNet::convnet(input_shape, cfg.width, cfg.depth, cfg.seed)?;
    let mut layers = net.layers().to_vec();
    layers.extend([
        Layer::Dense {
            in_features: embed_len(input_shape, cfg.width, cfg.depth)?,
            out_features: cfg.hidden,
        },
        Layer::Relu,
        Layer::Dense {
            in_features: cfg.hidden,
            out_features: cfg.projection_dim,
        },
    ]);
    net = FeatureNet::new(input_shape.to_vec(), layers, cfg.seed)?;
    Ok(net)
}

/// Supervised contrastive loss of raw (unnormalized) embeddings `u`, `n x dim`
/// row-major, and its gradient with respect to `u`.
///
/// Rows are L2-normalized to `z`. For every anchor `i` with at least one
/// positive, `l_i = log sum_{a != i} exp(z_i.z_a / tau) - mean_{p in P(i)} z_i.z_p / tau`.
/// The loss is the mean of `l_i` over such anchors, or 0 if there are none.
pub fn supcon_loss(u: &[f64], dim: usize, labels: &[usize], tau: f64) -> Result<(f64, Vec<f64>)> {
    let n = labels.len();
    if u.len() != n * dim {
        return Err(Error::Length {
            what: "contrastive embeddings",
            expected: n * dim,
            found: u.len(),
        });
    }
    let norms: Vec<f64> = u
        .chunks_exact(dim)
        .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12))
        .collect();
    let z: Vec<f64> = u
        .chunks_exact(dim)
        .zip(&norms)
        .flat_map(|(r, &nr)| r.iter().map(move |v| v / nr))
        .collect();
    let row = |i: usize| &z[i * dim..(i + 1) * dim];
    let mut sim = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let s = row(i).iter().zip(row(j)).map(|(a, b)| a * b).sum::<f64>() / tau;
            sim[i * n + j] = s;
            sim[j * n + i] = s;
        }
    }

    let anchors: Vec<usize> = (0..n)
        .filter(|&i| (0..n).any(|p| p != i && labels[p] == labels[i]))
        .collect();
    let mut dz = vec![0.0; n * dim];
    if anchors.is_empty() {
        return Ok((0.0, dz));
    }
    let scale = 1.0 / anchors.len() as f64;
    let mut loss = 0.0;
    let mut dsim = vec![0.0; n];
    for &i in &anchors {
        let s = &sim[i * n..(i + 1) * n];
        let max = (0..n).filter(|&a| a != i).map(|a| s[a]).fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = (0..n).filter(|&a| a != i).map(|a| (s[a] - max).exp()).sum();
        let lse = max + sum.ln();
        let positives = (0..n).filter(|&p| p != i && labels[p] == labels[i]).count() as f64;
        let pos_mean: f64 = (0..n)
            .filter(|&p| p != i && labels[p] == labels[i])
            .map(|p| s[p])
            .sum::<f64>()
            / positives;
        loss += lse - pos_mean;
        for a in 0..n {
            dsim[a] = if a == i {
                0.0
            } else {
                let q = (s[a] - max).exp() / sum;
                let pos = if labels[a] == labels[i] { 1.0 / positives } else { 0.0 };
                scale * (q - pos) / tau
            };
        }
        for a in 0..n {
            if dsim[a] == 0.0 {
                continue;
            }
            for k in 0..dim {
                dz[i * dim + k] += dsim[a] * z[a * dim + k];
                dz[a * dim + k] += dsim[a] * z[i * dim + k];
            }
        }
    }

    let mut du = vec![0.0; n * dim];
    for i in 0..n {
        let zi = row(i);
        let g = &dz[i * dim..(i + 1) * dim];
        let proj: f64 = zi.iter().zip(g).map(|(a, b)| a * b).sum();
        for k in 0..dim {
            du[i * dim + k] = (g[k] - zi[k] * proj) / norms[i];
        }
    }
    Ok((loss * scale, du))
}

/// Trains an encoder on class labels only. Returns the encoder and the mean
/// loss of every epoch.
pub fn train_supcon(train: &TrainingSet, cfg: &SupConConfig) -> Result<(FeatureNet, Vec<f64>)> {
    cfg.validate()?;
    let mut net = encoder(train.shape(), cfg)?;
    let mut opt = Sgd::new(cfg.lr, cfg.momentum, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(7);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let dim = cfg.projection_dim;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let batch = train.batch(chunk)?;
            let labels = train.batch_labels(chunk);
            let mut graph = Graph::new(&net);
            let out = graph.forward(&batch)?;
            let (loss, du) = supcon_loss(out.data(), dim, &labels, cfg.temperature)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("contrastive loss at epoch {epoch}")));
            }
            let grad = graph.backward_params(&Tensor::new(out.shape().to_vec(), du)?)?;
            drop(graph);
            opt.step(net.params_mut(), &grad)?;
            total += loss;
            batches += 1;
        }
        let mean = total / batches.max(1) as f64;
        info!("supcon epoch {epoch}: loss {mean:.5}");
        epoch_losses.push(mean);
    }
    Ok((net, epoch_losses))
}
