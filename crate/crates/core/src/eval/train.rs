use std::time::Instant;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{AugmentSet, AugmentationParams};
use crate::data::{hex_digest, TrainingSet};
use crate::error::{Error, Result};
use crate::nn::{mean_loss_and_gradient, FeatureNet, Sgd};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub width: usize,
    pub depth: usize,
    /// Epochs on distilled or subset data.
    pub epochs: usize,
    /// Epochs on full training splits.
    pub full_epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Augmentation applied to every training batch.
    pub augment: AugmentSet,
    pub seeds: Vec<u64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            width: 16,
            depth: 2,
            epochs: 100,
            full_epochs: 10,
            lr: 0.01,
            momentum: 0.9,
            batch_size: 16,
            augment: AugmentSet::NONE,
            seeds: vec![0, 1, 2],
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.depth == 0 || self.batch_size == 0 || !(self.lr > 0.0) {
            return Err(Error::Config("eval width, depth, batch_size and lr must be positive".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("eval needs at least one seed".into()));
        }
        Ok(())
    }

    /// SHA-256 of the serialized config.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("config serializes"));
        hex_digest(h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub accuracy: f64,
    pub per_class: Vec<f64>,
    pub seed: u64,
    pub epochs: usize,
    pub train_size: usize,
    pub config_fingerprint: String,
    /// Classes with no training sample.
    pub empty_classes: Vec<usize>,
    /// Excluded from serialized artifacts so reruns compare byte-equal.
    #[serde(skip)]
    pub wall_clock_seconds: f64,
}

/// Accuracy and per-class accuracy of `net` on `test`.
pub fn evaluate(net: &FeatureNet, test: &TrainingSet) -> Result<(f64, Vec<f64>)> {
    let classes = test.classes();
    let mut correct = vec![0usize; classes];
    let mut total = vec![0usize; classes];
    let all: Vec<usize> = (0..test.len()).collect();
    for chunk in all.chunks(256) {
        let logits = net.infer(&test.batch(chunk)?)?;
        let k = logits.sample_len();
        for (row, &i) in logits.data().chunks_exact(k).zip(chunk) {
            let pred = row
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (j, &v)| if v > b.1 { (j, v) } else { b })
                .0;
            let y = test.labels()[i];
            total[y] += 1;
            correct[y] += usize::from(pred == y);
        }
    }
    let n: usize = total.iter().sum();
    if n == 0 {
        return Err(Error::EmptySubset);
    }
    let per_class = correct
        .iter()
        .zip(&total)
        .map(|(&c, &t)| if t == 0 { 0.0 } else { c as f64 / t as f64 })
        .collect();
    Ok((correct.iter().sum::<usize>() as f64 / n as f64, per_class))
}

/// Fresh classifier with the distillation feature-net architecture.
pub fn classifier(train: &TrainingSet, cfg: &EvalConfig, seed: u64) -> Result<FeatureNet> {
    FeatureNet::convnet_classifier(train.shape(), cfg.width, cfg.depth, train.classes(), seed)
}

/// Trains from a fresh initialization with minibatch SGD and reports test
/// accuracy.
pub fn train_and_eval(
    train: &TrainingSet,
    test: &TrainingSet,
    cfg: &EvalConfig,
    epochs: usize,
    seed: u64,
) -> Result<EvalResult> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptySubset);
    }
    let start = Instant::now();
    let empty_classes: Vec<usize> = train
        .class_indices()
        .iter()
        .enumerate()
        .filter(|(_, m)| m.is_empty())
        .map(|(c, _)| c)
        .collect();
    if !empty_classes.is_empty() {
        warn!("training set has no samples of classes {empty_classes:?}");
    }
    let mut net = classifier(train, cfg, seed)?;
    let mut opt = Sgd::new(cfg.lr, cfg.momentum, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(11);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let aug = AugmentationParams::sample(cfg.augment, train.shape(), &mut rng);
            let batch = aug.apply(&train.batch(chunk)?)?;
            let (_, grad) = mean_loss_and_gradient(&net, &batch, &train.batch_labels(chunk))?;
            opt.step(net.params_mut(), &grad)?;
        }
    }
    let (accuracy, per_class) = evaluate(&net, test)?;
    Ok(EvalResult {
        accuracy,
        per_class,
        seed,
        epochs,
        train_size: train.len(),
        config_fingerprint: cfg.fingerprint(),
        empty_classes,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Mean and sample standard deviation (`n - 1` denominator; 0 for one value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
