//! Bundle directories and PNG sample grids.
//!
//! A bundle directory holds `meta.json` plus, per split, `<split>.f32`
//! (little-endian float32 pixels, sample-major) and `<split>.labels.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::bundle::{DatasetBundle, GeneratorSpec, LabeledImage, Split, SplitCounts};
use crate::error::{Error, Result};

pub const BUNDLE_FORMAT: &str = "kdistill-bundle/1";

#[derive(Debug, Serialize, Deserialize)]
pub struct BundleMeta {
    pub format: String,
    pub spec: GeneratorSpec,
    pub image_shape: [usize; 3],
    pub pairing: Vec<usize>,
    pub counts: BTreeMap<String, SplitCounts>,
}

#[derive(Serialize, Deserialize)]
struct SplitLabels {
    class_labels: Vec<usize>,
    bias_labels: Vec<usize>,
    aligned: Vec<bool>,
}

pub fn write_f32_blob(path: &Path, values: impl IntoIterator<Item = f32>) -> Result<()> {
    let bytes: Vec<u8> = values.into_iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_f32_blob(path: &Path) -> Result<Vec<f32>> {
    let bytes = fs::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::format(path, "length is not a multiple of 4"));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn save_bundle(bundle: &DatasetBundle, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut counts = BTreeMap::new();
    for split in Split::ALL {
        let images = bundle.split(split);
        counts.insert(split.name().to_string(), bundle.counts(split));
        write_f32_blob(
            &dir.join(format!("{}.f32", split.name())),
            images.iter().flat_map(|i| i.pixels.iter().copied()),
        )?;
        let labels = SplitLabels {
            class_labels: images.iter().map(|i| i.class_label).collect(),
            bias_labels: images.iter().map(|i| i.bias_label).collect(),
            aligned: images.iter().map(|i| i.aligned).collect(),
        };
        fs::write(
            dir.join(format!("{}.labels.json", split.name())),
            serde_json::to_vec(&labels)?,
        )?;
    }
    let meta = BundleMeta {
        format: BUNDLE_FORMAT.into(),
        spec: bundle.spec.clone(),
        image_shape: bundle.image_shape(),
        pairing: bundle.pairing.clone(),
        counts,
    };
    fs::write(dir.join("meta.json"), serde_json::to_vec_pretty(&meta)?)?;
    Ok(())
}

pub fn load_meta(dir: &Path) -> Result<BundleMeta> {
    let path = dir.join("meta.json");
    let meta: BundleMeta = serde_json::from_slice(&fs::read(&path)?)?;
    if meta.format != BUNDLE_FORMAT {
        return Err(Error::format(path, format!("unsupported format `{}`", meta.format)));
    }
    Ok(meta)
}

pub fn load_bundle(dir: &Path) -> Result<DatasetBundle> {
    let meta = load_meta(dir)?;
    let per: usize = meta.image_shape.iter().product();
    let mut splits = Vec::new();
    for split in Split::ALL {
        let blob_path = dir.join(format!("{}.f32", split.name()));
        let pixels = read_f32_blob(&blob_path)?;
        let labels: SplitLabels =
            serde_json::from_slice(&fs::read(dir.join(format!("{}.labels.json", split.name())))?)?;
        let n = labels.class_labels.len();
        if pixels.len() != n * per || labels.bias_labels.len() != n || labels.aligned.len() != n {
            return Err(Error::format(blob_path, "pixel blob and labels disagree in length"));
        }
        let images = pixels
            .chunks_exact(per)
            .enumerate()
            .map(|(i, px)| LabeledImage {
                pixels: px.to_vec(),
                class_label: labels.class_labels[i],
                bias_label: labels.bias_labels[i],
                aligned: labels.aligned[i],
            })
            .collect();
        splits.push(images);
    }
    let test_unbiased = splits.pop().unwrap();
    let train_unbiased = splits.pop().unwrap();
    let train_biased = splits.pop().unwrap();
    Ok(DatasetBundle {
        spec: meta.spec,
        pairing: meta.pairing,
        train_biased,
        train_unbiased,
        test_unbiased,
    })
}

/// Writes images as a grid, `cols` per row, each pixel scaled up `zoom` times.
/// Pixel values are clamped to `[0, 1]`.
pub fn write_grid_png<'a>(
    path: &Path,
    images: impl IntoIterator<Item = &'a [f64]>,
    shape: [usize; 3],
    cols: usize,
    zoom: usize,
) -> Result<()> {
    let images: Vec<&[f64]> = images.into_iter().collect();
    let [c, h, w] = shape;
    if images.is_empty() || cols == 0 || !(c == 1 || c == 3) {
        return Err(Error::Image("need at least one 1- or 3-channel image and cols > 0".into()));
    }
    let rows = images.len().div_ceil(cols);
    let (cell_h, cell_w) = (h * zoom + 1, w * zoom + 1);
    let mut img = image::RgbImage::new((cols * cell_w + 1) as u32, (rows * cell_h + 1) as u32);
    for (k, px) in images.iter().enumerate() {
        let (gy, gx) = (k / cols, k % cols);
        for y in 0..h * zoom {
            for x in 0..w * zoom {
                let (sy, sx) = (y / zoom, x / zoom);
                let val = |ch: usize| {
                    let v = px[ch.min(c - 1) * h * w + sy * w + sx];
                    (v.clamp(0.0, 1.0) * 255.0).round() as u8
                };
                img.put_pixel(
                    (gx * cell_w + 1 + x) as u32,
                    (gy * cell_h + 1 + y) as u32,
                    image::Rgb([val(0), val(1), val(2)]),
                );
            }
        }
    }
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Image(e.to_string()))
}

/// Grid of the first `per_class` images of each class, one class per row.
pub fn write_class_grid(path: &Path, images: &[LabeledImage], shape: [usize; 3], classes: usize, per_class: usize) -> Result<()> {
    let mut rows: Vec<Vec<Vec<f64>>> = vec![Vec::new(); classes];
    for img in images {
        let row = &mut rows[img.class_label];
        if row.len() < per_class {
            row.push(img.pixels.iter().map(|&v| v as f64).collect());
        }
    }
    let blank = vec![0.0; shape.iter().product()];
    let mut cells: Vec<&[f64]> = Vec::with_capacity(classes * per_class);
    for row in &rows {
        for k in 0..per_class {
            cells.push(row.get(k).map_or(&blank[..], |v| &v[..]));
        }
    }
    write_grid_png(path, cells, shape, per_class, 2)
}
