//! Subcommand implementations behind the `kdistill` binary.
//!
//! Output layout under the configured output directory:
//!
//! ```text
//! resolved_config.toml
//! dataset/             bundle (meta.json, <split>.f32, <split>.labels.json, grid.png)
//! embed/               encoder.ckpt, table.emb, distances.cache, losses.csv
//! weights/weights.csv
//! distill/<method>[-kde]/  synthetic/, trace.csv, grid.png, resolved_config.toml
//! eval/<source>.jsonl
//! bench/               table.csv, table.md, runs.jsonl
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::config::{RunConfig, RESOLVED_CONFIG};
use crate::data::{hex_digest, load_bundle, load_meta, save_bundle, write_class_grid, DatasetBundle, Split, TrainingSet};
use crate::distill::{distill_dm_with, distill_dsa_with, DistillOutput, Method, SyntheticSet, Weighting};
use crate::embed::{embed_all, train_supcon, DistanceCache, EmbeddingTable};
use crate::error::{Error, Result};
use crate::eval::{benchmark_table, mean_std, splits, train_and_eval, BenchTable};
use crate::kde::{weight_rows, write_weight_csv};
use crate::nn::{load_checkpoint, save_checkpoint};

/// Artifact locations under one output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset")
    }

    pub fn embed(&self) -> PathBuf {
        self.root.join("embed")
    }

    pub fn weights(&self) -> PathBuf {
        self.root.join("weights")
    }

    pub fn distill(&self, method: Method, kde: bool) -> PathBuf {
        let name = format!("{}{}", method.name(), if kde { "-kde" } else { "" });
        self.root.join("distill").join(name)
    }

    pub fn eval(&self) -> PathBuf {
        self.root.join("eval")
    }

    pub fn bench(&self) -> PathBuf {
        self.root.join("bench")
    }
}

/// Exit status of a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok = 0,
    Partial = 1,
    Validation = 2,
    Numeric = 3,
}

impl Status {
    pub fn of_error(e: &Error) -> Status {
        if e.is_numeric() {
            Status::Numeric
        } else {
            Status::Validation
        }
    }
}

/// SHA-256 over the relative paths and contents of every file below `dir`.
pub fn dir_digest(dir: &Path) -> Result<String> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        for entry in fs::read_dir(dir)? {
            let p = entry?.path();
            if p.is_dir() {
                walk(&p, out)?;
            } else {
                out.push(p);
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    walk(dir, &mut files)?;
    files.sort();
    let mut h = Sha256::new();
    for f in files {
        let rel = f.strip_prefix(dir).unwrap_or(&f);
        h.update(rel.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(fs::read(&f)?);
    }
    Ok(hex_digest(h))
}

fn load_dataset(layout: &Layout) -> Result<DatasetBundle> {
    let dir = layout.dataset();
    if !dir.join("meta.json").exists() {
        return Err(Error::Missing {
            what: "dataset",
            path: dir,
            hint: "run `kdistill generate` first",
        });
    }
    load_bundle(&dir)
}

fn biased_train(bundle: &DatasetBundle) -> TrainingSet {
    TrainingSet::from_images(&bundle.train_biased, bundle.image_shape(), bundle.classes())
}

/// Generates the configured bundle and returns a count summary.
pub fn cmd_generate(cfg: &RunConfig) -> Result<String> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.output);
    let d = &cfg.dataset;
    let bundle = d.bundle(&d.preset, d.conflict_ratio, cfg.seed)?;
    let dir = layout.dataset();
    save_bundle(&bundle, &dir)?;
    write_class_grid(&dir.join("grid.png"), &bundle.train_biased, bundle.image_shape(), bundle.classes(), 10)?;
    cfg.echo(&cfg.output)?;
    let mut out = String::new();
    for split in Split::ALL {
        let c = bundle.counts(split);
        writeln!(
            out,
            "{}: {} samples, {} aligned, {} conflicting",
            split.name(),
            c.total,
            c.aligned,
            c.conflicting
        )
        .unwrap();
    }
    write!(out, "wrote {}", dir.display()).unwrap();
    Ok(out)
}

/// Trains the contrastive encoder on the biased split and writes the
/// embedding table and a filled distance cache.
pub fn cmd_embed(cfg: &RunConfig) -> Result<String> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.output);
    let bundle = load_dataset(&layout)?;
    let train = biased_train(&bundle);
    let (encoder, losses) = train_supcon(&train, &cfg.embed)?;
    let table = embed_all(&encoder, &train)?;
    let mut cache = DistanceCache::new(&table);
    cache.fill(&table)?;
    let dir = layout.embed();
    fs::create_dir_all(&dir)?;
    save_checkpoint(&encoder, &dir.join("encoder.ckpt"))?;
    table.save(&dir.join("table.emb"))?;
    cache.save(&dir.join("distances.cache"))?;
    let mut w = csv::Writer::from_path(dir.join("losses.csv"))?;
    w.write_record(["epoch", "loss"])?;
    for (e, l) in losses.iter().enumerate() {
        w.write_record([e.to_string(), l.to_string()])?;
    }
    w.flush()?;
    cfg.echo(&cfg.output)?;
    Ok(format!(
        "encoder {} trained for {} epochs (final loss {:.5}); wrote {}",
        &table.encoder_fingerprint[..12],
        losses.len(),
        losses.last().copied().unwrap_or(f64::NAN),
        dir.display()
    ))
}

/// Loads the embedding table and cache if they match `train`, otherwise
/// builds them.
fn embeddings(cfg: &RunConfig, layout: &Layout, train: &TrainingSet) -> Result<(EmbeddingTable, DistanceCache)> {
    let dir = layout.embed();
    if let Ok(table) = EmbeddingTable::load(&dir.join("table.emb")) {
        if table.check_dataset(train).is_ok() {
            let cache = DistanceCache::load(&dir.join("distances.cache"), &table).unwrap_or_else(|_| DistanceCache::new(&table));
            return Ok((table, cache));
        }
    }
    cmd_embed(cfg)?;
    let table = EmbeddingTable::load(&dir.join("table.emb"))?;
    let cache = DistanceCache::load(&dir.join("distances.cache"), &table)?;
    Ok((table, cache))
}

/// Writes per-sample KDE weights computed over each whole class.
pub fn cmd_weights(cfg: &RunConfig) -> Result<String> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.output);
    let bundle = load_dataset(&layout)?;
    let train = biased_train(&bundle);
    let (table, mut cache) = embeddings(cfg, &layout, &train)?;
    let kde = cfg.distill.kde.clone().unwrap_or_default();
    let mut rows = Vec::with_capacity(train.len());
    let mut conflict_mass = 0.0;
    for members in train.class_indices() {
        if members.is_empty() {
            continue;
        }
        let r = weight_rows(&table, &members, &kde, Some(&mut cache))?;
        conflict_mass += r.iter().filter(|w| !bundle.train_biased[w.index].aligned).map(|w| w.weight).sum::<f64>();
        rows.extend(r);
    }
    rows.sort_by_key(|r| r.index);
    let dir = layout.weights();
    fs::create_dir_all(&dir)?;
    write_weight_csv(&dir.join("weights.csv"), &rows)?;
    cfg.echo(&cfg.output)?;
    Ok(format!(
        "mean per-class weight on bias-conflicting samples: {:.4}; wrote {}",
        conflict_mass / train.classes() as f64,
        dir.join("weights.csv").display()
    ))
}

/// Runs one distillation and writes its artifacts. Returns the artifact
/// directory.
pub fn cmd_distill(cfg: &RunConfig, method: Method, kde: bool) -> Result<PathBuf> {
    let mut cfg = cfg.clone();
    if kde && cfg.distill.kde.is_none() {
        cfg.distill.kde = Some(Default::default());
    }
    if !kde {
        cfg.distill.kde = None;
    }
    cfg.method = method;
    cfg.validate()?;
    let layout = Layout::new(&cfg.output);
    let bundle = load_dataset(&layout)?;
    let train = biased_train(&bundle);
    let stored;
    let weighting = match &cfg.distill.kde {
        Some(k) => {
            stored = embeddings(&cfg, &layout, &train)?;
            Weighting::Kde {
                table: &stored.0,
                config: k.clone(),
                cache: stored.1.clone(),
            }
        }
        None => Weighting::Vanilla,
    };
    let DistillOutput { synthetic, trace } = match method {
        Method::Dm => distill_dm_with(&train, &cfg.distill, weighting)?,
        Method::Dsa => distill_dsa_with(&train, &cfg.distill, weighting)?,
    };
    let dir = layout.distill(method, kde);
    synthetic.save(&dir.join("synthetic"))?;
    synthetic.write_grid(&dir.join("grid.png"))?;
    trace.write_csv(&dir.join("trace.csv"))?;
    cfg.echo(&dir)?;
    Ok(dir)
}

/// Which training set `cmd_eval` scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalSource {
    Distilled { method: Method, kde: bool },
    Biased,
    Unbiased,
}

/// Trains one classifier per configured seed and reports mean and std.
pub fn cmd_eval(cfg: &RunConfig, source: EvalSource) -> Result<String> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.output);
    let bundle = load_dataset(&layout)?;
    let (unbiased, biased, test) = splits(&bundle);
    let (train, epochs, name) = match source {
        EvalSource::Biased => (biased, cfg.eval.full_epochs, "biased".to_string()),
        EvalSource::Unbiased => (unbiased, cfg.eval.full_epochs, "unbiased".to_string()),
        EvalSource::Distilled { method, kde } => {
            let dir = layout.distill(method, kde).join("synthetic");
            if !dir.join("meta.json").exists() {
                return Err(Error::Missing {
                    what: "distilled set",
                    path: dir,
                    hint: "run `kdistill distill` with the same --method and --kde first",
                });
            }
            let set = SyntheticSet::load(&dir)?.to_training_set();
            let name = layout.distill(method, kde).file_name().unwrap().to_string_lossy().into_owned();
            (set, cfg.eval.epochs, name)
        }
    };
    let mut lines = String::new();
    let mut accs = Vec::new();
    for &seed in &cfg.eval.seeds {
        let r = train_and_eval(&train, &test, &cfg.eval, epochs, seed)?;
        accs.push(r.accuracy);
        lines.push_str(&serde_json::to_string(&r)?);
        lines.push('\n');
    }
    let dir = layout.eval();
    fs::create_dir_all(&dir)?;
    fs::write(dir.join(format!("{name}.jsonl")), lines)?;
    let (m, s) = mean_std(&accs);
    Ok(format!(
        "{name}: unbiased test accuracy {:.2} ± {:.2} over {} seeds",
        100.0 * m,
        100.0 * s,
        accs.len()
    ))
}

/// Runs the configured benchmark grid and writes CSV, Markdown and
/// JSON-lines outputs.
pub fn cmd_bench(cfg: &RunConfig) -> Result<BenchTable> {
    cfg.validate()?;
    let layout = Layout::new(&cfg.output);
    let pipeline = cfg.pipeline();
    let table = benchmark_table(&cfg.bench, &pipeline, |preset, ratio, seed| {
        cfg.dataset.bundle(preset, ratio, seed)
    });
    let dir = layout.bench();
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("table.csv"), table.to_csv()?)?;
    fs::write(dir.join("table.md"), table.to_markdown())?;
    fs::write(dir.join("runs.jsonl"), table.runs_jsonl()?)?;
    cfg.echo(&dir)?;
    Ok(table)
}

/// Describes an artifact file or directory.
pub fn cmd_inspect(path: &Path) -> Result<String> {
    let mut out = String::new();
    if path.is_dir() {
        if path.join("synthetic.f32").exists() {
            let s = SyntheticSet::load(path)?;
            let px = s.pixels();
            let mean = px.iter().sum::<f64>() / px.len() as f64;
            write!(
                out,
                "synthetic set: {} classes x {} images of {:?}, mean pixel {mean:.4}",
                s.classes(),
                s.ipc(),
                s.shape()
            )
            .unwrap();
        } else if path.join("meta.json").exists() {
            let meta = load_meta(path)?;
            writeln!(out, "dataset bundle {:?}, image shape {:?}", meta.spec.preset, meta.image_shape).unwrap();
            for (split, c) in &meta.counts {
                writeln!(out, "  {split}: {} samples, {} aligned, {} conflicting", c.total, c.aligned, c.conflicting).unwrap();
            }
            write!(out, "  digest {}", dir_digest(path)?).unwrap();
        } else if path.join(RESOLVED_CONFIG).exists() {
            out = fs::read_to_string(path.join(RESOLVED_CONFIG))?;
        } else {
            return Err(Error::format(path, "not a recognized artifact directory"));
        }
        return Ok(out);
    }
    match path.extension().and_then(|e| e.to_str()) {
        Some("ckpt") => {
            let net = load_checkpoint(path)?;
            let names: Vec<&str> = net.layers().iter().map(|l| l.name()).collect();
            write!(out, "network: input {:?}, {} params, layers {names:?}", net.input_shape(), net.param_count()).unwrap();
        }
        Some("emb") => {
            let t = EmbeddingTable::load(path)?;
            write!(out, "embedding table: {} rows of dim {}, encoder {}", t.len(), t.dim, t.encoder_fingerprint).unwrap();
        }
        Some("csv") | Some("md") | Some("jsonl") | Some("toml") => out = fs::read_to_string(path)?,
        _ => return Err(Error::format(path, "unknown artifact type")),
    }
    Ok(out)
}
