//! Bias-injected datasets: color- and background-biased glyph images with a
//! controlled fraction of bias-conflicting samples.

mod attributes;
mod bundle;
mod glyph;
mod io;
mod presets;
mod training;

pub use attributes::{colorize, compose, nearest_palette, Texture, PALETTE, TEXTURES};
pub use bundle::{
    generate, generate_with, make_background_biased, make_color_biased, BiasKind, ConflictMode, DatasetBundle,
    GeneratorSpec, LabeledImage, Split, SplitCounts,
};
pub use glyph::{render_glyph, ExternalGlyphs, GlyphSource, GLYPH_CLASSES};
pub use io::{
    load_bundle, load_meta, read_f32_blob, save_bundle, write_class_grid, write_f32_blob, write_grid_png,
    BundleMeta,
};
pub use presets::{
    reference_scale_spec, toy_bundle, toy_spec, REFERENCE_COUNTS, REFERENCE_TRAIN_SIZE, TOY_PER_CLASS,
    TOY_PRESETS, TOY_TEST_PER_CLASS,
};
pub use training::TrainingSet;
pub(crate) use training::hex_digest;

#[cfg(test)]
mod tests;
