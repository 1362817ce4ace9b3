use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::*;
use crate::error::Error;

fn small_spec(kind: BiasKind, ratio: f64, seed: u64) -> GeneratorSpec {
    GeneratorSpec {
        kind,
        classes: 10,
        per_class: 40,
        test_per_class: 20,
        resolution: 8,
        conflict_ratio: ratio,
        conflict_total: None,
        conflict_mode: ConflictMode::OtherClass,
        seed,
        preset: None,
    }
}

fn chi2_uniform_p(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    let expected = n as f64 / counts.len() as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    1.0 - ChiSquared::new((counts.len() - 1) as f64).unwrap().cdf(stat)
}

#[test]
fn ratio_outside_open_interval_is_rejected() {
    for r in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
        let err = make_color_biased(&GlyphSource::Procedural, 2, 10, 2, 8, r, 0).unwrap_err();
        assert!(matches!(err, Error::ConflictRatio(_)), "{r}: {err}");
    }
}

#[test]
fn symmetric_ratio_splits_evenly() {
    let b = make_color_biased(&GlyphSource::Procedural, 2, 100, 5, 8, 0.5, 3).unwrap();
    let c = b.counts(Split::TrainBiased);
    assert_eq!((c.aligned, c.conflicting), (100, 100));
}

#[test]
fn per_class_conflicts_round_ratio() {
    let b = make_background_biased(&GlyphSource::Procedural, 8, 8, 10, 50, 5, 0.05, 1).unwrap();
    let c = b.counts(Split::TrainBiased);
    let expected = (0.05f64 * 50.0).round() as usize;
    for &k in &c.per_class_conflicting {
        assert!(k.abs_diff(expected) <= 1);
    }
}

#[test]
fn mismatched_background_resolution_is_rejected() {
    let err = make_background_biased(&GlyphSource::Procedural, 8, 16, 10, 5, 5, 0.05, 1).unwrap_err();
    assert!(matches!(err, Error::Shape(_)));
}

#[test]
fn toy_preset_counts() {
    let b = toy_bundle("color-shapes-16", 0.05, 0).unwrap();
    assert_eq!(b.image_shape(), [3, 16, 16]);
    let c = b.counts(Split::TrainBiased);
    assert!(c.per_class_aligned.iter().all(|&a| a == 475));
    assert!(c.per_class_conflicting.iter().all(|&k| k == 25));
    assert_eq!(b.test_unbiased.len(), 1000);
}

#[test]
fn unknown_preset_lists_available() {
    let err = toy_bundle("cifar", 0.05, 0).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("color-shapes-16") && msg.contains("bg-shapes-16"), "{msg}");
}

#[test]
fn test_split_bias_is_uniform_per_class() {
    for kind in [BiasKind::Color, BiasKind::Background] {
        let mut spec = small_spec(kind, 0.05, 9);
        spec.test_per_class = 100;
        let b = generate(&spec).unwrap();
        for class in 0..10 {
            let mut hist = vec![0; 10];
            for img in b.test_unbiased.iter().filter(|i| i.class_label == class) {
                hist[img.bias_label] += 1;
            }
            assert!(chi2_uniform_p(&hist) > 0.01, "{kind:?} class {class}: {hist:?}");
        }
    }
}

#[test]
fn unbiased_train_is_aligned_about_one_in_c() {
    let b = generate(&small_spec(BiasKind::Color, 0.05, 2)).unwrap();
    let c = b.counts(Split::TrainUnbiased);
    let frac = c.aligned as f64 / c.total as f64;
    // 400 Bernoulli(0.1) draws, 4 standard deviations.
    assert!((frac - 0.1).abs() < 4.0 * (0.09f64 / 400.0).sqrt(), "{frac}");
}

#[test]
fn aligned_flag_matches_pairing_and_pixels_in_range() {
    for mode in [ConflictMode::OtherClass, ConflictMode::Random] {
        for kind in [BiasKind::Color, BiasKind::Background] {
            let mut spec = small_spec(kind, 0.2, 4);
            spec.conflict_mode = mode;
            let b = generate(&spec).unwrap();
            for split in Split::ALL {
                for img in b.split(split) {
                    assert_eq!(img.aligned, b.pairing[img.class_label] == img.bias_label);
                    assert!(img.bias_label < spec.classes);
                    assert!(img.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
                }
            }
            let c = b.counts(Split::TrainBiased);
            assert!(c.per_class_conflicting.iter().all(|&k| k == 8), "{mode:?} {kind:?}");
        }
    }
}

#[test]
fn conflicting_colors_are_other_class_canonical() {
    let b = generate(&small_spec(BiasKind::Color, 0.25, 5)).unwrap();
    for img in b.train_biased.iter().filter(|i| !i.aligned) {
        assert_ne!(img.bias_label, img.class_label);
    }
}

#[test]
fn pinned_total_spreads_over_classes() {
    let mut spec = small_spec(BiasKind::Color, 0.05, 0);
    spec.conflict_total = Some(23);
    assert_eq!(spec.conflicts_per_class(), vec![3, 3, 3, 2, 2, 2, 2, 2, 2, 2]);
    spec.conflict_total = Some(401);
    assert!(spec.validate().is_err());
}

#[test]
fn reference_spec_pins_published_counts() {
    for (r, aligned, conflicting) in REFERENCE_COUNTS {
        let spec = reference_scale_spec(r, 4, 0).unwrap();
        let total: usize = spec.conflicts_per_class().iter().sum();
        assert_eq!(spec.classes * spec.per_class, REFERENCE_TRAIN_SIZE);
        assert_eq!((REFERENCE_TRAIN_SIZE - total, total), (aligned, conflicting));
    }
    assert!(reference_scale_spec(0.03, 4, 0).is_err());
}

fn serialized(b: &DatasetBundle) -> Vec<Vec<u8>> {
    let dir = tempfile::tempdir().unwrap();
    save_bundle(b, dir.path()).unwrap();
    let mut names: Vec<_> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    names.sort();
    names.iter().map(|p| std::fs::read(p).unwrap()).collect()
}

#[test]
fn same_seed_serializes_identically() {
    let spec = small_spec(BiasKind::Background, 0.1, 17);
    let a = serialized(&generate(&spec).unwrap());
    let b = serialized(&generate(&spec).unwrap());
    assert_eq!(a, b);
    let c = serialized(&generate(&GeneratorSpec { seed: 18, ..spec }).unwrap());
    assert_ne!(a, c);
}

#[test]
fn bundle_round_trip() {
    let b = generate(&small_spec(BiasKind::Color, 0.1, 6)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_bundle(&b, dir.path()).unwrap();
    assert_eq!(load_bundle(dir.path()).unwrap(), b);
    let meta = load_meta(dir.path()).unwrap();
    assert_eq!(meta.counts["train_biased"], b.counts(Split::TrainBiased));
}

#[test]
fn truncated_blob_is_a_format_error() {
    let b = generate(&small_spec(BiasKind::Color, 0.1, 6)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    save_bundle(&b, dir.path()).unwrap();
    let p = dir.path().join("test_unbiased.f32");
    let bytes = std::fs::read(&p).unwrap();
    std::fs::write(&p, &bytes[..bytes.len() - 8]).unwrap();
    assert!(matches!(load_bundle(dir.path()), Err(Error::Format { .. })));
}

#[test]
fn grid_png_has_expected_size() {
    let b = generate(&small_spec(BiasKind::Color, 0.1, 6)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.png");
    write_class_grid(&path, &b.train_biased, b.image_shape(), 10, 4).unwrap();
    let img = image::open(&path).unwrap();
    assert_eq!((img.width(), img.height()), (4 * 17 + 1, 10 * 17 + 1));
}

#[test]
fn training_set_strips_bias_and_batches() {
    let b = generate(&small_spec(BiasKind::Color, 0.1, 6)).unwrap();
    let t = TrainingSet::from_images(&b.train_biased, b.image_shape(), 10);
    assert_eq!(t.len(), 400);
    let batch = t.batch(&[3, 7]).unwrap();
    assert_eq!(batch.shape(), &[2, 3, 8, 8]);
    assert_eq!(batch.sample(1), t.sample(7));
    assert_eq!(t.sample(7)[5], b.train_biased[7].pixels[5] as f64);
    assert!(t.class_indices().iter().all(|c| c.len() == 40));
    assert!(matches!(t.batch(&[400]), Err(Error::Index { .. })));
    assert_eq!(t.digest(), TrainingSet::from_images(&b.train_biased, b.image_shape(), 10).digest());
    assert_ne!(t.digest(), t.subset(&[0, 1]).unwrap().digest());
}
