use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::attributes::{colorize, compose, jittered_color, nearest_palette, PALETTE, TEXTURES};
use super::glyph::{GlyphSource, GLYPH_CLASSES};
use crate::error::{Error, Result};

/// Which spurious attribute is injected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasKind {
    Color,
    Background,
}

/// How a bias-conflicting sample picks its attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConflictMode {
    /// The canonical attribute of a uniformly chosen other class.
    #[default]
    OtherClass,
    /// A random color (or randomly tinted texture) that is not the class's own.
    Random,
}

/// Everything needed to regenerate a bundle bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub kind: BiasKind,
    pub classes: usize,
    pub per_class: usize,
    pub test_per_class: usize,
    pub resolution: usize,
    pub conflict_ratio: f64,
    /// Pins the total number of conflicting training samples instead of
    /// deriving it from `conflict_ratio`.
    #[serde(default)]
    pub conflict_total: Option<usize>,
    #[serde(default)]
    pub conflict_mode: ConflictMode,
    pub seed: u64,
    #[serde(default)]
    pub preset: Option<String>,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.conflict_ratio > 0.0 && self.conflict_ratio < 1.0) {
            return Err(Error::ConflictRatio(self.conflict_ratio));
        }
        if self.classes < 2 || self.classes > PALETTE.len().min(GLYPH_CLASSES) {
            return Err(Error::Config(format!(
                "classes must be in 2..={}, got {}",
                PALETTE.len().min(GLYPH_CLASSES),
                self.classes
            )));
        }
        if self.per_class == 0 || self.resolution < 4 {
            return Err(Error::Config(
                "per_class must be positive and resolution at least 4".into(),
            ));
        }
        if let Some(t) = self.conflict_total {
            if t > self.classes * self.per_class {
                return Err(Error::Config(format!(
                    "conflict_total {t} exceeds {} training samples",
                    self.classes * self.per_class
                )));
            }
        }
        Ok(())
    }

    /// Number of conflicting samples drawn for each class.
    pub fn conflicts_per_class(&self) -> Vec<usize> {
        match self.conflict_total {
            Some(total) => {
                let base = total / self.classes;
                let extra = total % self.classes;
                (0..self.classes).map(|c| base + usize::from(c < extra)).collect()
            }
            None => {
                let n = (self.conflict_ratio * self.per_class as f64).round() as usize;
                vec![n.min(self.per_class); self.classes]
            }
        }
    }

    pub fn image_shape(&self) -> [usize; 3] {
        [3, self.resolution, self.resolution]
    }
}

/// One image with its class label and the hidden bias attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    /// Channel-major `(C, H, W)` pixels in `[0, 1]`.
    pub pixels: Vec<f32>,
    pub class_label: usize,
    pub bias_label: usize,
    pub aligned: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    TrainBiased,
    TrainUnbiased,
    TestUnbiased,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::TrainBiased, Split::TrainUnbiased, Split::TestUnbiased];

    pub fn name(self) -> &'static str {
        match self {
            Split::TrainBiased => "train_biased",
            Split::TrainUnbiased => "train_unbiased",
            Split::TestUnbiased => "test_unbiased",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Split::TrainBiased => 1,
            Split::TrainUnbiased => 2,
            Split::TestUnbiased => 3,
        }
    }
}

/// Alignment counts of one split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub total: usize,
    pub aligned: usize,
    pub conflicting: usize,
    pub per_class_aligned: Vec<usize>,
    pub per_class_conflicting: Vec<usize>,
}

impl SplitCounts {
    pub fn of(images: &[LabeledImage], classes: usize) -> Self {
        let mut per_class_aligned = vec![0; classes];
        let mut per_class_conflicting = vec![0; classes];
        for img in images {
            if img.aligned {
                per_class_aligned[img.class_label] += 1;
            } else {
                per_class_conflicting[img.class_label] += 1;
            }
        }
        let aligned = per_class_aligned.iter().sum();
        SplitCounts {
            total: images.len(),
            aligned,
            conflicting: images.len() - aligned,
            per_class_aligned,
            per_class_conflicting,
        }
    }
}

/// Biased and unbiased training splits plus an unbiased test split.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub spec: GeneratorSpec,
    /// Canonical bias attribute of each class.
    pub pairing: Vec<usize>,
    pub train_biased: Vec<LabeledImage>,
    pub train_unbiased: Vec<LabeledImage>,
    pub test_unbiased: Vec<LabeledImage>,
}

impl DatasetBundle {
    pub fn image_shape(&self) -> [usize; 3] {
        self.spec.image_shape()
    }

    pub fn classes(&self) -> usize {
        self.spec.classes
    }

    pub fn conflict_ratio(&self) -> f64 {
        self.spec.conflict_ratio
    }

    pub fn split(&self, split: Split) -> &[LabeledImage] {
        match split {
            Split::TrainBiased => &self.train_biased,
            Split::TrainUnbiased => &self.train_unbiased,
            Split::TestUnbiased => &self.test_unbiased,
        }
    }

    pub fn counts(&self, split: Split) -> SplitCounts {
        SplitCounts::of(self.split(split), self.spec.classes)
    }
}

struct Renderer<'a> {
    spec: &'a GeneratorSpec,
    glyphs: &'a GlyphSource,
}

impl Renderer<'_> {
    /// Renders `class` with attribute `attr`; `random_conflict` switches to
    /// the random-attribute rendering of conflicting samples.
    fn render(&self, class: usize, attr: usize, random_conflict: bool, rng: &mut ChaCha8Rng) -> Result<LabeledImage> {
        let res = self.spec.resolution;
        let classes = self.spec.classes;
        let mask = self.glyphs.mask(class, res, rng)?;
        let (pixels, bias_label) = match self.spec.kind {
            BiasKind::Color if random_conflict => loop {
                let color = [0; 3].map(|_| rng.gen_range(0.0f32..=1.0));
                let nearest = nearest_palette(color);
                if nearest != class && nearest < classes {
                    break (colorize(&mask, color), nearest);
                }
            },
            BiasKind::Color => (colorize(&mask, jittered_color(PALETTE[attr], rng)), attr),
            BiasKind::Background => {
                let bg = if random_conflict {
                    TEXTURES[attr].render_random_tint(res, rng)
                } else {
                    TEXTURES[attr].render(res, rng)
                };
                (compose(&mask, [1.0, 1.0, 1.0], &bg), attr)
            }
        };
        Ok(LabeledImage {
            pixels,
            class_label: class,
            bias_label,
            aligned: bias_label == class,
        })
    }
}

fn other_class(class: usize, classes: usize, rng: &mut impl Rng) -> usize {
    let k = rng.gen_range(0..classes - 1);
    if k >= class {
        k + 1
    } else {
        k
    }
}

fn split_rng(seed: u64, split: Split) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(split.stream());
    rng
}

/// Generates all three splits. Class `c` is canonically paired with
/// attribute `c`.
pub fn generate_with(spec: &GeneratorSpec, glyphs: &GlyphSource) -> Result<DatasetBundle> {
    spec.validate()?;
    let r = Renderer { spec, glyphs };
    let classes = spec.classes;

    let mut rng = split_rng(spec.seed, Split::TrainBiased);
    let conflicts = spec.conflicts_per_class();
    let random_mode = spec.conflict_mode == ConflictMode::Random;
    let mut train_biased = Vec::with_capacity(classes * spec.per_class);
    for (class, &n_conf) in conflicts.iter().enumerate() {
        for k in 0..spec.per_class {
            let (attr, random) = if k < n_conf {
                (other_class(class, classes, &mut rng), random_mode)
            } else {
                (class, false)
            };
            train_biased.push(r.render(class, attr, random, &mut rng)?);
        }
    }
    train_biased.shuffle(&mut rng);

    let mut rng = split_rng(spec.seed, Split::TrainUnbiased);
    let mut train_unbiased = Vec::with_capacity(classes * spec.per_class);
    for class in 0..classes {
        for _ in 0..spec.per_class {
            let attr = rng.gen_range(0..classes);
            train_unbiased.push(r.render(class, attr, false, &mut rng)?);
        }
    }
    train_unbiased.shuffle(&mut rng);

    let mut rng = split_rng(spec.seed, Split::TestUnbiased);
    let mut test_unbiased = Vec::with_capacity(classes * spec.test_per_class);
    for class in 0..classes {
        for k in 0..spec.test_per_class {
            test_unbiased.push(r.render(class, k % classes, false, &mut rng)?);
        }
    }
    test_unbiased.shuffle(&mut rng);

    Ok(DatasetBundle {
        spec: spec.clone(),
        pairing: (0..classes).collect(),
        train_biased,
        train_unbiased,
        test_unbiased,
    })
}

/// Generates with procedural glyphs. Only the biased split honors
/// `conflict_mode`; unbiased splits draw canonical attributes uniformly.
pub fn generate(spec: &GeneratorSpec) -> Result<DatasetBundle> {
    generate_with(spec, &GlyphSource::Procedural)
}

/// Color-biased bundle: each class's strokes are drawn in its canonical color
/// with small per-channel jitter; conflicting samples take another color.
pub fn make_color_biased(
    glyphs: &GlyphSource,
    classes: usize,
    per_class: usize,
    test_per_class: usize,
    resolution: usize,
    conflict_ratio: f64,
    seed: u64,
) -> Result<DatasetBundle> {
    generate_with(
        &GeneratorSpec {
            kind: BiasKind::Color,
            classes,
            per_class,
            test_per_class,
            resolution,
            conflict_ratio,
            conflict_total: None,
            conflict_mode: ConflictMode::OtherClass,
            seed,
            preset: None,
        },
        glyphs,
    )
}

/// Background-biased bundle: white strokes alpha-blended over each class's
/// canonical texture. Foreground and background resolutions must agree.
#[allow(clippy::too_many_arguments)]
pub fn make_background_biased(
    glyphs: &GlyphSource,
    foreground_resolution: usize,
    background_resolution: usize,
    classes: usize,
    per_class: usize,
    test_per_class: usize,
    conflict_ratio: f64,
    seed: u64,
) -> Result<DatasetBundle> {
    if foreground_resolution != background_resolution {
        return Err(Error::Shape(format!(
            "foreground resolution {foreground_resolution} does not match background resolution {background_resolution}"
        )));
    }
    generate_with(
        &GeneratorSpec {
            kind: BiasKind::Background,
            classes,
            per_class,
            test_per_class,
            resolution: foreground_resolution,
            conflict_ratio,
            conflict_total: None,
            conflict_mode: ConflictMode::OtherClass,
            seed,
            preset: None,
        },
        glyphs,
    )
}
