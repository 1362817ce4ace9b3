use super::bundle::{generate, BiasKind, ConflictMode, DatasetBundle, GeneratorSpec};
use crate::error::{Error, Result};

pub const TOY_PRESETS: [&str; 2] = ["color-shapes-16", "bg-shapes-16"];

pub const TOY_PER_CLASS: usize = 500;
pub const TOY_TEST_PER_CLASS: usize = 100;

/// Published (conflict ratio, aligned, conflicting) counts of the
/// 55,000-sample colored-digit training set. These are counts of one fixed
/// random draw, not `ratio * 55,000`, so they are pinned here verbatim.
pub const REFERENCE_COUNTS: [(f64, usize, usize); 3] = [
    (0.01, 54_509, 491),
    (0.02, 54_014, 986),
    (0.05, 52_551, 2_449),
];

pub const REFERENCE_TRAIN_SIZE: usize = 55_000;

/// 10-class, 3x16x16 glyph datasets with color or background bias.
pub fn toy_spec(preset: &str, conflict_ratio: f64, seed: u64) -> Result<GeneratorSpec> {
    let kind = match preset {
        "color-shapes-16" => BiasKind::Color,
        "bg-shapes-16" => BiasKind::Background,
        other => {
            return Err(Error::UnknownPreset {
                name: other.to_string(),
                available: TOY_PRESETS.join(", "),
            })
        }
    };
    let spec = GeneratorSpec {
        kind,
        classes: 10,
        per_class: TOY_PER_CLASS,
        test_per_class: TOY_TEST_PER_CLASS,
        resolution: 16,
        conflict_ratio,
        conflict_total: None,
        conflict_mode: ConflictMode::OtherClass,
        seed,
        preset: Some(preset.to_string()),
    };
    spec.validate()?;
    Ok(spec)
}

pub fn toy_bundle(preset: &str, conflict_ratio: f64, seed: u64) -> Result<DatasetBundle> {
    generate(&toy_spec(preset, conflict_ratio, seed)?)
}

/// Color-biased spec at the reference scale (5,500 training samples per
/// class) whose conflicting total reproduces [`REFERENCE_COUNTS`].
pub fn reference_scale_spec(conflict_ratio: f64, resolution: usize, seed: u64) -> Result<GeneratorSpec> {
    if !(conflict_ratio > 0.0 && conflict_ratio < 1.0) {
        return Err(Error::ConflictRatio(conflict_ratio));
    }
    let (_, _, conflicting) = REFERENCE_COUNTS
        .iter()
        .find(|(r, _, _)| (r - conflict_ratio).abs() < 1e-12)
        .ok_or_else(|| {
            Error::Config(format!(
                "no reference counts for ratio {conflict_ratio}; available: 0.01, 0.02, 0.05"
            ))
        })?;
    let spec = GeneratorSpec {
        kind: BiasKind::Color,
        classes: 10,
        per_class: REFERENCE_TRAIN_SIZE / 10,
        test_per_class: 1000,
        resolution,
        conflict_ratio,
        conflict_total: Some(*conflicting),
        conflict_mode: ConflictMode::OtherClass,
        seed,
        preset: Some("color-reference".into()),
    };
    spec.validate()?;
    Ok(spec)
}
