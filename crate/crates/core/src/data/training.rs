use sha2::{Digest, Sha256};

use super::bundle::LabeledImage;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Pixels and class labels only. Bias attributes are dropped at construction,
/// so nothing downstream of this type can consume them.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    shape: [usize; 3],
    classes: usize,
    pixels: Vec<f64>,
    labels: Vec<usize>,
}

impl TrainingSet {
    pub fn new(shape: [usize; 3], classes: usize, pixels: Vec<f64>, labels: Vec<usize>) -> Result<Self> {
        let per: usize = shape.iter().product();
        if pixels.len() != per * labels.len() {
            return Err(Error::Length {
                what: "training pixels",
                expected: per * labels.len(),
                found: pixels.len(),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        Ok(TrainingSet {
            shape,
            classes,
            pixels,
            labels,
        })
    }

    pub fn from_images(images: &[LabeledImage], shape: [usize; 3], classes: usize) -> Self {
        let per: usize = shape.iter().product();
        let mut pixels = Vec::with_capacity(per * images.len());
        for img in images {
            debug_assert_eq!(img.pixels.len(), per);
            pixels.extend(img.pixels.iter().map(|&v| v as f64));
        }
        TrainingSet {
            shape,
            classes,
            pixels,
            labels: images.iter().map(|i| i.class_label).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn sample_len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let n = self.sample_len();
        &self.pixels[i * n..(i + 1) * n]
    }

    /// Stacks the given samples into an `(n, C, H, W)` tensor.
    pub fn batch(&self, indices: &[usize]) -> Result<Tensor> {
        let n = self.sample_len();
        let mut data = Vec::with_capacity(n * indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Index {
                    index: i,
                    len: self.len(),
                });
            }
            data.extend_from_slice(self.sample(i));
        }
        let [c, h, w] = self.shape;
        Tensor::new(vec![indices.len(), c, h, w], data)
    }

    pub fn batch_labels(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    /// Sample indices grouped by class, in dataset order.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.classes];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    pub fn subset(&self, indices: &[usize]) -> Result<TrainingSet> {
        let batch = self.batch(indices)?;
        TrainingSet::new(self.shape, self.classes, batch.into_data(), self.batch_labels(indices))
    }

    /// SHA-256 over shape, labels and pixel bits.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for d in self.shape {
            h.update((d as u64).to_le_bytes());
        }
        h.update((self.classes as u64).to_le_bytes());
        for &l in &self.labels {
            h.update((l as u64).to_le_bytes());
        }
        for &p in &self.pixels {
            h.update(p.to_le_bytes());
        }
        hex_digest(h)
    }
}

pub(crate) fn hex_digest(h: Sha256) -> String {
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
