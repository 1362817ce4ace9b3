//! Downstream evaluation: train fresh classifiers on distilled, subset or full
//! data and score them on the unbiased test split.

mod pipeline;
mod table;
mod train;

pub use pipeline::{
    amplification, evaluate_pipeline, random_subset, run_pipeline, run_pipeline_with, splits,
    AmplificationReport, EmbeddingStore, Pipeline, PipelineConfig,
};
pub use table::{benchmark_table, BenchCell, BenchMethod, BenchSpec, BenchTable, RunRecord};
pub use train::{classifier, evaluate, mean_std, train_and_eval, EvalConfig, EvalResult};
