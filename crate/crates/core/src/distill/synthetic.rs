use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{read_f32_blob, write_f32_blob, write_grid_png, TrainingSet};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Learnable images, `ipc` per class; class `c` owns slots `c * ipc .. (c + 1) * ipc`.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSet {
    shape: [usize; 3],
    classes: usize,
    ipc: usize,
    pixels: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct SyntheticMeta {
    shape: [usize; 3],
    classes: usize,
    ipc: usize,
}

impl SyntheticSet {
    /// Uniform noise in `[0, 1]`.
    pub fn noise(shape: [usize; 3], classes: usize, ipc: usize, rng: &mut impl Rng) -> Self {
        let n = classes * ipc * shape.iter().product::<usize>();
        SyntheticSet {
            shape,
            classes,
            ipc,
            pixels: (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect(),
        }
    }

    pub fn from_pixels(shape: [usize; 3], classes: usize, ipc: usize, pixels: Vec<f64>) -> Result<Self> {
        let expected = classes * ipc * shape.iter().product::<usize>();
        if pixels.len() != expected {
            return Err(Error::Length {
                what: "synthetic pixels",
                expected,
                found: pixels.len(),
            });
        }
        Ok(SyntheticSet {
            shape,
            classes,
            ipc,
            pixels,
        })
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn ipc(&self) -> usize {
        self.ipc
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    fn class_len(&self) -> usize {
        self.ipc * self.shape.iter().product::<usize>()
    }

    pub fn class_pixels(&self, class: usize) -> &[f64] {
        let n = self.class_len();
        &self.pixels[class * n..(class + 1) * n]
    }

    pub fn class_pixels_mut(&mut self, class: usize) -> &mut [f64] {
        let n = self.class_len();
        &mut self.pixels[class * n..(class + 1) * n]
    }

    /// `(ipc, C, H, W)` tensor of one class.
    pub fn class_batch(&self, class: usize) -> Tensor {
        let [c, h, w] = self.shape;
        Tensor::new(vec![self.ipc, c, h, w], self.class_pixels(class).to_vec()).expect("class slice length")
    }

    pub fn labels(&self) -> Vec<usize> {
        (0..self.classes).flat_map(|c| std::iter::repeat_n(c, self.ipc)).collect()
    }

    pub fn to_training_set(&self) -> TrainingSet {
        TrainingSet::new(self.shape, self.classes, self.pixels.clone(), self.labels()).expect("consistent synthetic set")
    }

    /// Writes `meta.json`, `synthetic.f32` and `synthetic.labels.json`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let meta = SyntheticMeta {
            shape: self.shape,
            classes: self.classes,
            ipc: self.ipc,
        };
        fs::write(dir.join("meta.json"), serde_json::to_vec_pretty(&meta)?)?;
        write_f32_blob(&dir.join("synthetic.f32"), self.pixels.iter().map(|&v| v as f32))?;
        fs::write(
            dir.join("synthetic.labels.json"),
            serde_json::to_vec(&serde_json::json!({ "class_labels": self.labels() }))?,
        )?;
        Ok(())
    }

    /// Reads a set written by [`SyntheticSet::save`]; pixels pass through f32.
    pub fn load(dir: &Path) -> Result<Self> {
        let meta: SyntheticMeta = serde_json::from_slice(&fs::read(dir.join("meta.json"))?)?;
        let pixels = read_f32_blob(&dir.join("synthetic.f32"))?;
        Self::from_pixels(
            meta.shape,
            meta.classes,
            meta.ipc,
            pixels.into_iter().map(f64::from).collect(),
        )
        .map_err(|e| Error::format(dir.join("synthetic.f32"), e.to_string()))
    }

    /// One row per class.
    pub fn write_grid(&self, path: &Path) -> Result<()> {
        let n: usize = self.shape.iter().product();
        write_grid_png(path, self.pixels.chunks_exact(n), self.shape, self.ipc, 2)
    }
}

/// Momentum SGD on pixels followed by clipping to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct PixelOptimizer {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<f64>,
}

impl PixelOptimizer {
    pub fn new(lr: f64, momentum: f64, len: usize) -> Self {
        PixelOptimizer {
            lr,
            momentum,
            velocity: vec![0.0; len],
        }
    }

    /// Updates the slice of `syn` owned by `class`.
    pub fn step(&mut self, syn: &mut SyntheticSet, class: usize, grad: &[f64]) -> Result<()> {
        let n = syn.class_len();
        if grad.len() != n {
            return Err(Error::Length {
                what: "pixel gradient",
                expected: n,
                found: grad.len(),
            });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("pixel gradient of class {class}")));
        }
        let v = &mut self.velocity[class * n..(class + 1) * n];
        for ((p, g), v) in syn.class_pixels_mut(class).iter_mut().zip(grad).zip(v) {
            *v = self.momentum * *v + g;
            *p = (*p - self.lr * *v).clamp(0.0, 1.0);
        }
        Ok(())
    }
}

/// Loss of one class at one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub class: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossTrace {
    pub rows: Vec<TraceRow>,
}

impl LossTrace {
    /// Sum over classes of every iteration.
    pub fn totals(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for r in &self.rows {
            if out.len() <= r.iteration {
                out.resize(r.iteration + 1, 0.0);
            }
            out[r.iteration] += r.loss;
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillOutput {
    pub synthetic: SyntheticSet,
    pub trace: LossTrace,
}
