use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{DistillConfig, DsaConfig, SurrogateKind};
use super::synthetic::{DistillOutput, LossTrace, PixelOptimizer, SyntheticSet, TraceRow};
use super::weighting::{sample_class, Weighting};
use crate::augment::AugmentationParams;
use crate::data::TrainingSet;
use crate::embed::EmbeddingTable;
use crate::error::Result;
use crate::nn::{
    ensure_second_order_capable, match_gradients, mean_loss_and_gradient, mean_param_gradient, param_gradient,
    FeatureNet, GradientSource, Sgd,
};
use crate::tensor::Tensor;

/// The surrogate network and its schedule.
#[derive(Debug, Clone)]
pub struct SurrogateState {
    pub net: FeatureNet,
    pub step: usize,
    pub schedule: DsaConfig,
}

impl SurrogateState {
    pub fn new(shape: [usize; 3], classes: usize, schedule: &DsaConfig, seed: u64) -> Result<Self> {
        let net = match schedule.surrogate {
            SurrogateKind::Mlp => FeatureNet::mlp(shape.to_vec(), schedule.hidden, classes, seed)?,
            SurrogateKind::Convnet => FeatureNet::convnet_classifier(shape, 16, 2, classes, seed)?,
        };
        ensure_second_order_capable(&net)?;
        Ok(SurrogateState {
            net,
            step: 0,
            schedule: schedule.clone(),
        })
    }

    /// Trains on the synthetic set for the configured number of epochs, in
    /// slot order.
    pub fn advance(&mut self, syn: &SyntheticSet) -> Result<()> {
        let data = syn.to_training_set();
        let mut opt = Sgd::new(self.schedule.inner_lr, 0.0, 0.0);
        let all: Vec<usize> = (0..data.len()).collect();
        for _ in 0..self.schedule.inner_epochs {
            for chunk in all.chunks(self.schedule.inner_batch) {
                let (_, grad) = mean_loss_and_gradient(&self.net, &data.batch(chunk)?, &data.batch_labels(chunk))?;
                opt.step(self.net.params_mut(), &grad)?;
            }
        }
        self.step += 1;
        Ok(())
    }
}

/// One class's real batch at one iteration.
#[derive(Debug, Clone)]
pub struct ClassBatch {
    pub class: usize,
    pub real: Tensor,
    /// `None` for the plain mean gradient.
    pub weights: Option<Vec<f64>>,
    pub aug: AugmentationParams,
}

/// Matches gradients for every class batch, takes one pixel step per class
/// and then trains the surrogate on the updated synthetic set. Returns the
/// per-class gradient distances.
pub fn dsa_step(
    state: &mut SurrogateState,
    batches: &[ClassBatch],
    syn: &mut SyntheticSet,
    opt: &mut PixelOptimizer,
) -> Result<Vec<f64>> {
    let mut distances = Vec::with_capacity(batches.len());
    for b in batches {
        let labels = vec![b.class; b.real.batch()];
        let real = b.aug.apply(&b.real)?;
        let real_grad = match &b.weights {
            Some(w) => param_gradient(&state.net, &real, &labels, w, GradientSource::Real)?,
            None => mean_param_gradient(&state.net, &real, &labels, GradientSource::Real)?,
        };
        let syn_batch = b.aug.apply(&syn.class_batch(b.class))?;
        let syn_labels = vec![b.class; syn_batch.batch()];
        let m = match_gradients(&state.net, &real_grad, &syn_batch, &syn_labels, 1.0)?;
        let pixel_grad = b.aug.adjoint(&m.pixel_grad)?;
        opt.step(syn, b.class, pixel_grad.data())?;
        distances.push(m.distance);
    }
    state.advance(syn)?;
    Ok(distances)
}

/// Gradient matching with KDE-weighted real gradients when `cfg.kde` is set.
pub fn distill_dsa(train: &TrainingSet, cfg: &DistillConfig, embeddings: Option<&EmbeddingTable>) -> Result<DistillOutput> {
    let weighting = Weighting::from_config(train, cfg, embeddings)?;
    distill_dsa_with(train, cfg, weighting)
}

pub fn distill_dsa_with(train: &TrainingSet, cfg: &DistillConfig, mut weighting: Weighting) -> Result<DistillOutput> {
    cfg.validate()?;
    let shape = train.shape();
    let classes = train.classes();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = SurrogateState::new(shape, classes, &cfg.dsa, rng.gen())?;
    let mut syn = SyntheticSet::noise(shape, classes, cfg.ipc, &mut rng);
    let mut opt = PixelOptimizer::new(cfg.dsa.lr_pixels, cfg.momentum, syn.pixels().len());
    let members = train.class_indices();
    let mut trace = LossTrace::default();
    for iteration in 0..cfg.iterations {
        if iteration > 0 && iteration % cfg.dsa.reinit_every == 0 {
            state.net.reinitialize(rng.gen());
        }
        let mut batches = Vec::with_capacity(classes);
        for (class, m) in members.iter().enumerate() {
            if m.is_empty() {
                continue;
            }
            let idx = sample_class(m, cfg.batch_real, &mut rng);
            batches.push(ClassBatch {
                class,
                real: train.batch(&idx)?,
                weights: weighting.weights(&idx)?,
                aug: AugmentationParams::sample(cfg.augment, shape, &mut rng),
            });
        }
        let distances = dsa_step(&mut state, &batches, &mut syn, &mut opt)?;
        for (b, loss) in batches.iter().zip(distances) {
            trace.rows.push(TraceRow {
                iteration,
                class: b.class,
                loss,
            });
        }
        if iteration % 100 == 0 {
            debug!("dsa iteration {iteration}: distance {:.6}", trace.totals()[iteration]);
        }
    }
    Ok(DistillOutput { synthetic: syn, trace })
}
