use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::graph::Graph;
use super::net::FeatureNet;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Which data produced a parameter gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GradientSource {
    Real,
    Synthetic,
}

/// Flat parameter gradient aligned with a net's parameter vector, together
/// with the per-layer block boundaries used by layer-wise distances.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    pub values: Vec<f64>,
    pub source: GradientSource,
    pub blocks: Vec<Range<usize>>,
}

impl GradientVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    match labels.iter().find(|&&l| l >= classes) {
        Some(&label) => Err(Error::LabelOutOfRange { label, classes }),
        None => Ok(()),
    }
}

/// Softmax probabilities of each row, max-subtracted.
pub fn softmax_rows(logits: &[f64], classes: usize) -> Vec<f64> {
    let mut out = logits.to_vec();
    for row in out.chunks_exact_mut(classes) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Per-sample cross-entropy losses and the unscaled logit gradients
/// `softmax(z) - onehot(y)`.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(Vec<f64>, Tensor)> {
    let n = logits.batch();
    let classes = logits.sample_len();
    if labels.len() != n {
        return Err(Error::Length {
            what: "labels",
            expected: n,
            found: labels.len(),
        });
    }
    check_labels(labels, classes)?;
    let mut probs = softmax_rows(logits.data(), classes);
    let mut losses = Vec::with_capacity(n);
    for (row, &y) in probs.chunks_exact_mut(classes).zip(labels) {
        losses.push(-row[y].max(f64::MIN_POSITIVE).ln());
        row[y] -= 1.0;
    }
    Ok((losses, Tensor::new(vec![n, classes], probs)?))
}

fn classifier_gradient(
    net: &FeatureNet,
    batch: &Tensor,
    labels: &[usize],
    scale_rows: impl Fn(usize, &mut [f64]),
    source: GradientSource,
) -> Result<GradientVector> {
    let mut graph = Graph::new(net);
    let logits = graph.forward(batch)?;
    let (_, mut dlogits) = cross_entropy(&logits, labels)?;
    let classes = dlogits.sample_len();
    for (i, row) in dlogits.data_mut().chunks_exact_mut(classes).enumerate() {
        scale_rows(i, row);
    }
    let values = graph.backward_params(&dlogits)?;
    Ok(GradientVector {
        values,
        source,
        blocks: net.param_blocks(),
    })
}

/// `sum_i w_i * grad_theta CE(net(x_i), y_i)`.
pub fn param_gradient(
    net: &FeatureNet,
    batch: &Tensor,
    labels: &[usize],
    weights: &[f64],
    source: GradientSource,
) -> Result<GradientVector> {
    if weights.len() != batch.batch() {
        return Err(Error::Length {
            what: "sample weights",
            expected: batch.batch(),
            found: weights.len(),
        });
    }
    classifier_gradient(
        net,
        batch,
        labels,
        |i, row| {
            for v in row {
                *v *= weights[i];
            }
        },
        source,
    )
}

/// Plain mean of the per-sample cross-entropy gradients.
pub fn mean_param_gradient(
    net: &FeatureNet,
    batch: &Tensor,
    labels: &[usize],
    source: GradientSource,
) -> Result<GradientVector> {
    let n = batch.batch() as f64;
    classifier_gradient(
        net,
        batch,
        labels,
        |_, row| {
            for v in row {
                *v /= n;
            }
        },
        source,
    )
}

/// Mean cross-entropy and its parameter gradient, for ordinary training.
pub fn mean_loss_and_gradient(
    net: &FeatureNet,
    batch: &Tensor,
    labels: &[usize],
) -> Result<(f64, Vec<f64>)> {
    let mut graph = Graph::new(net);
    let logits = graph.forward(batch)?;
    let (losses, mut dlogits) = cross_entropy(&logits, labels)?;
    let n = losses.len() as f64;
    for v in dlogits.data_mut() {
        *v /= n;
    }
    let grad = graph.backward_params(&dlogits)?;
    Ok((losses.iter().sum::<f64>() / n, grad))
}
