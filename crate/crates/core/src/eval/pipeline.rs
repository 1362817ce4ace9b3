use std::collections::HashMap;

use log::info;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::train::{mean_std, train_and_eval, EvalConfig, EvalResult};
use crate::data::{DatasetBundle, TrainingSet};
use crate::distill::{distill, DistillConfig, Method};
use crate::embed::{embed_all, train_supcon, EmbeddingTable, SupConConfig};
use crate::error::Result;
use crate::kde::KdeConfig;

/// What turns a training split into the set a classifier is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Pipeline {
    Identity,
    /// `ipc` real images per class drawn uniformly, kept in dataset order.
    RandomSubset { ipc: usize },
    Distill { method: Method, kde: bool },
}

impl Pipeline {
    pub fn label(&self) -> String {
        match self {
            Pipeline::Identity => "identity".into(),
            Pipeline::RandomSubset { .. } => "random-subset".into(),
            Pipeline::Distill { method, kde } => {
                format!("{}{}", method.name(), if *kde { "+kde" } else { "" })
            }
        }
    }
}

/// All settings a pipeline run may need.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineConfig {
    pub distill: DistillConfig,
    pub kde: KdeConfig,
    pub embed: SupConConfig,
    pub eval: EvalConfig,
}

pub fn random_subset(train: &TrainingSet, ipc: usize, seed: u64) -> Result<TrainingSet> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(13);
    let mut picked: Vec<usize> = train
        .class_indices()
        .iter()
        .flat_map(|m| m.choose_multiple(&mut rng, ipc).copied().collect::<Vec<_>>())
        .collect();
    picked.sort_unstable();
    train.subset(&picked)
}

/// Encoders trained so far, keyed by dataset digest and seed.
#[derive(Debug, Default)]
pub struct EmbeddingStore {
    tables: HashMap<(String, u64), EmbeddingTable>,
}

impl EmbeddingStore {
    pub fn get_or_train(&mut self, train: &TrainingSet, cfg: &SupConConfig, seed: u64) -> Result<&EmbeddingTable> {
        let key = (train.digest(), seed);
        if !self.tables.contains_key(&key) {
            let ecfg = SupConConfig {
                seed,
                ..cfg.clone()
            };
            let (encoder, _) = train_supcon(train, &ecfg)?;
            self.tables.insert(key.clone(), embed_all(&encoder, train)?);
        }
        Ok(&self.tables[&key])
    }
}

/// Applies the pipeline with `seed` and returns the resulting training set
/// and the number of evaluation epochs it calls for.
pub fn run_pipeline(
    pipeline: Pipeline,
    train: &TrainingSet,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<(TrainingSet, usize)> {
    run_pipeline_with(pipeline, train, cfg, seed, &mut EmbeddingStore::default())
}

pub fn run_pipeline_with(
    pipeline: Pipeline,
    train: &TrainingSet,
    cfg: &PipelineConfig,
    seed: u64,
    store: &mut EmbeddingStore,
) -> Result<(TrainingSet, usize)> {
    match pipeline {
        Pipeline::Identity => Ok((train.clone(), cfg.eval.full_epochs)),
        Pipeline::RandomSubset { ipc } => Ok((random_subset(train, ipc, seed)?, cfg.eval.epochs)),
        Pipeline::Distill { method, kde } => {
            let mut dcfg = cfg.distill.clone();
            dcfg.seed = seed;
            dcfg.kde = kde.then(|| cfg.kde.clone());
            let table = if kde {
                Some(store.get_or_train(train, &cfg.embed, seed)?)
            } else {
                None
            };
            let out = distill(method, train, &dcfg, table)?;
            Ok((out.synthetic.to_training_set(), cfg.eval.epochs))
        }
    }
}

/// Runs the pipeline on `train` and evaluates on `test`, once per seed.
pub fn evaluate_pipeline(
    pipeline: Pipeline,
    train: &TrainingSet,
    test: &TrainingSet,
    cfg: &PipelineConfig,
    seeds: &[u64],
    store: &mut EmbeddingStore,
) -> Result<Vec<EvalResult>> {
    seeds
        .iter()
        .map(|&seed| {
            let (set, epochs) = run_pipeline_with(pipeline, train, cfg, seed, store)?;
            let r = train_and_eval(&set, test, &cfg.eval, epochs, seed)?;
            info!("{} seed {seed}: accuracy {:.4}", pipeline.label(), r.accuracy);
            Ok(r)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplificationReport {
    pub pipeline: Pipeline,
    /// Mean accuracy when the pipeline consumes the unbiased split.
    pub acc_unbiased_source: f64,
    /// Mean accuracy when the pipeline consumes the biased split.
    pub acc_biased_source: f64,
    pub delta: f64,
    pub unbiased_runs: Vec<EvalResult>,
    pub biased_runs: Vec<EvalResult>,
}

impl AmplificationReport {
    pub fn from_runs(pipeline: Pipeline, unbiased_runs: Vec<EvalResult>, biased_runs: Vec<EvalResult>) -> Self {
        let acc = |r: &[EvalResult]| mean_std(&r.iter().map(|e| e.accuracy).collect::<Vec<_>>()).0;
        let (u, b) = (acc(&unbiased_runs), acc(&biased_runs));
        AmplificationReport {
            pipeline,
            acc_unbiased_source: u,
            acc_biased_source: b,
            delta: u - b,
            unbiased_runs,
            biased_runs,
        }
    }
}

/// Accuracy drop caused by bias in the source split, for one pipeline.
pub fn amplification(
    bundle: &DatasetBundle,
    pipeline: Pipeline,
    cfg: &PipelineConfig,
    seeds: &[u64],
) -> Result<AmplificationReport> {
    let (unbiased, biased, test) = splits(bundle);
    let mut store = EmbeddingStore::default();
    let u = evaluate_pipeline(pipeline, &unbiased, &test, cfg, seeds, &mut store)?;
    let b = evaluate_pipeline(pipeline, &biased, &test, cfg, seeds, &mut store)?;
    Ok(AmplificationReport::from_runs(pipeline, u, b))
}

/// Unbiased train, biased train and test splits with bias attributes removed.
pub fn splits(bundle: &DatasetBundle) -> (TrainingSet, TrainingSet, TrainingSet) {
    let shape = bundle.image_shape();
    let c = bundle.classes();
    (
        TrainingSet::from_images(&bundle.train_unbiased, shape, c),
        TrainingSet::from_images(&bundle.train_biased, shape, c),
        TrainingSet::from_images(&bundle.test_unbiased, shape, c),
    )
}
