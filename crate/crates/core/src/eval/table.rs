use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::pipeline::{evaluate_pipeline, splits, EmbeddingStore, Pipeline, PipelineConfig};
use super::train::{mean_std, EvalResult};
use crate::data::DatasetBundle;
use crate::distill::Method;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchMethod {
    RandomSubset,
    Dm,
    DmKde,
    Dsa,
    DsaKde,
}

impl BenchMethod {
    pub fn pipeline(self, ipc: usize) -> Pipeline {
        match self {
            BenchMethod::RandomSubset => Pipeline::RandomSubset { ipc },
            BenchMethod::Dm => Pipeline::Distill { method: Method::Dm, kde: false },
            BenchMethod::DmKde => Pipeline::Distill { method: Method::Dm, kde: true },
            BenchMethod::Dsa => Pipeline::Distill { method: Method::Dsa, kde: false },
            BenchMethod::DsaKde => Pipeline::Distill { method: Method::Dsa, kde: true },
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            BenchMethod::RandomSubset => "random-subset",
            BenchMethod::Dm => "dm",
            BenchMethod::DmKde => "dm+kde",
            BenchMethod::Dsa => "dsa",
            BenchMethod::DsaKde => "dsa+kde",
        }
    }
}

/// Grid of benchmark cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSpec {
    pub presets: Vec<String>,
    pub methods: Vec<BenchMethod>,
    pub ipcs: Vec<usize>,
    pub ratios: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Seed of the generated datasets.
    pub data_seed: u64,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            presets: vec!["color-shapes-16".into()],
            methods: vec![BenchMethod::Dm, BenchMethod::DmKde],
            ipcs: vec![10],
            ratios: vec![0.01, 0.02, 0.05],
            seeds: vec![0, 1, 2],
            data_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub preset: String,
    pub ratio: f64,
    pub ipc: usize,
    pub method: BenchMethod,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub accuracies: Vec<f64>,
    pub error: Option<String>,
}

/// One evaluated run, for JSON-lines persistence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub preset: String,
    pub ratio: f64,
    pub ipc: usize,
    pub method: BenchMethod,
    pub result: EvalResult,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchTable {
    pub cells: Vec<BenchCell>,
    pub runs: Vec<RunRecord>,
}

impl BenchTable {
    pub fn is_partial(&self) -> bool {
        self.cells.iter().any(|c| c.error.is_some())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["preset", "ratio", "ipc", "method", "mean", "std", "seeds", "error"])?;
        for c in &self.cells {
            w.write_record([
                c.preset.clone(),
                c.ratio.to_string(),
                c.ipc.to_string(),
                c.method.label().to_string(),
                c.mean.map_or(String::new(), |v| format!("{v:.6}")),
                c.std.map_or(String::new(), |v| format!("{v:.6}")),
                c.accuracies.len().to_string(),
                c.error.clone().unwrap_or_default(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    /// One row per (preset, ratio, ipc), one column per method. Failed
    /// cells show `n/a`.
    pub fn to_markdown(&self) -> String {
        let mut methods: Vec<BenchMethod> = Vec::new();
        let mut rows: Vec<(String, f64, usize)> = Vec::new();
        for c in &self.cells {
            if !methods.contains(&c.method) {
                methods.push(c.method);
            }
            let key = (c.preset.clone(), c.ratio, c.ipc);
            if !rows.contains(&key) {
                rows.push(key);
            }
        }
        let mut out = String::from("| preset | ratio | ipc |");
        for m in &methods {
            write!(out, " {} |", m.label()).unwrap();
        }
        out.push_str("\n|---|---|---|");
        out.push_str(&"---|".repeat(methods.len()));
        out.push('\n');
        for (preset, ratio, ipc) in rows {
            write!(out, "| {preset} | {ratio} | {ipc} |").unwrap();
            for m in &methods {
                let cell = self
                    .cells
                    .iter()
                    .find(|c| c.preset == preset && c.ratio == ratio && c.ipc == ipc && c.method == *m);
                match cell.and_then(|c| c.mean.zip(c.std)) {
                    Some((mean, std)) => write!(out, " {:.1} ± {:.1} |", 100.0 * mean, 100.0 * std).unwrap(),
                    None => out.push_str(" n/a |"),
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn runs_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.runs {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Evaluates every (preset, ratio, ipc, method) cell on the biased training
/// split of the generated bundle. A failing cell is recorded with its error
/// and the remaining cells still run.
pub fn benchmark_table(
    spec: &BenchSpec,
    cfg: &PipelineConfig,
    make_bundle: impl Fn(&str, f64, u64) -> Result<DatasetBundle>,
) -> BenchTable {
    let mut table = BenchTable::default();
    for preset in &spec.presets {
        for &ratio in &spec.ratios {
            let bundle = make_bundle(preset, ratio, spec.data_seed);
            let mut store = EmbeddingStore::default();
            for &ipc in &spec.ipcs {
                for &method in &spec.methods {
                    let mut cell = BenchCell {
                        preset: preset.clone(),
                        ratio,
                        ipc,
                        method,
                        mean: None,
                        std: None,
                        accuracies: Vec::new(),
                        error: None,
                    };
                    let result = bundle.as_ref().map_err(|e| e.to_string()).and_then(|b| {
                        let (_, biased, test) = splits(b);
                        let mut c = cfg.clone();
                        c.distill.ipc = ipc;
                        evaluate_pipeline(method.pipeline(ipc), &biased, &test, &c, &spec.seeds, &mut store)
                            .map_err(|e| e.to_string())
                    });
                    match result {
                        Ok(runs) => {
                            cell.accuracies = runs.iter().map(|r| r.accuracy).collect();
                            let (m, s) = mean_std(&cell.accuracies);
                            cell.mean = Some(m);
                            cell.std = Some(s);
                            table.runs.extend(runs.into_iter().map(|result| RunRecord {
                                preset: preset.clone(),
                                ratio,
                                ipc,
                                method,
                                result,
                            }));
                        }
                        Err(e) => cell.error = Some(e),
                    }
                    table.cells.push(cell);
                }
            }
        }
    }
    table
}
