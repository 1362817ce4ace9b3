//! Inverse-density sample weights from Gaussian kernel density estimates in
//! embedding space.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embed::{pairwise_distances, DistanceCache, EmbeddingTable};
use crate::error::{Error, Result};

/// Which samples share one weight normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightScope {
    /// Densities and weights are computed within each real class batch.
    #[default]
    PerClassBatch,
    /// Densities over the whole class; a batch takes its members' weights
    /// renormalized to sum to one.
    PerClassGlobal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KdeConfig {
    /// Kernel variance.
    pub sigma2: f64,
    /// Softmax temperature applied to inverse densities.
    pub temperature: f64,
    /// Scores above this percentile of the scoped set are clamped to it.
    pub cutoff_percentile: Option<f64>,
    pub scope: WeightScope,
}

impl Default for KdeConfig {
    fn default() -> Self {
        KdeConfig {
            sigma2: 0.1,
            temperature: 0.1,
            cutoff_percentile: Some(99.0),
            scope: WeightScope::PerClassBatch,
        }
    }
}

impl KdeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(Error::Config(format!("sigma2 must be positive, got {}", self.sigma2)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if let Some(p) = self.cutoff_percentile {
            if !(p > 0.0 && p <= 100.0) {
                return Err(Error::Config(format!("cutoff_percentile must lie in (0, 100], got {p}")));
            }
        }
        Ok(())
    }
}

/// Nonnegative weights summing to one over a scoped sample list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    pub scope: WeightScope,
}

impl WeightVector {
    pub fn uniform(n: usize, scope: WeightScope) -> Self {
        WeightVector {
            weights: vec![1.0 / n as f64; n],
            scope,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// `K(u) = exp(-u^2 / (2 sigma^2)) / (sigma sqrt(2 pi))`.
pub fn gaussian_kernel(u: f64, sigma2: f64) -> f64 {
    (-0.5 * u * u / sigma2).exp() / (sigma2 * 2.0 * std::f64::consts::PI).sqrt()
}

/// Density at every point of a set given its dense `n x n` distance matrix.
/// The self term `K(0)` is included.
pub fn kde_density_from_distances(dist: &[f64], n: usize, cfg: &KdeConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if n == 0 {
        return Err(Error::EmptySubset);
    }
    if dist.len() != n * n {
        return Err(Error::Length {
            what: "distance matrix",
            expected: n * n,
            found: dist.len(),
        });
    }
    Ok(dist
        .chunks_exact(n)
        .map(|row| row.iter().map(|&d| gaussian_kernel(d, cfg.sigma2)).sum::<f64>() / n as f64)
        .collect())
}

/// Density at every row of an `n x dim` point matrix.
pub fn kde_density(points: &[f64], dim: usize, cfg: &KdeConfig) -> Result<Vec<f64>> {
    if dim == 0 || !points.len().is_multiple_of(dim) {
        return Err(Error::Shape(format!("{} values do not form rows of length {dim}", points.len())));
    }
    let n = points.len() / dim;
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = crate::embed::euclidean(row(i), row(j));
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    kde_density_from_distances(&dist, n, cfg)
}

/// Linear-interpolation percentile (`p` in `[0, 100]`) of unsorted values.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Inverse densities, clamped at the configured percentile.
pub fn scores_from_density(densities: &[f64], cfg: &KdeConfig) -> Result<Vec<f64>> {
    if densities.is_empty() {
        return Err(Error::EmptySubset);
    }
    if let Some((i, &d)) = densities.iter().enumerate().find(|(_, d)| !(**d > 0.0 && d.is_finite())) {
        return Err(Error::Density(d, i));
    }
    let mut scores: Vec<f64> = densities.iter().map(|d| 1.0 / d).collect();
    if let Some(p) = cfg.cutoff_percentile {
        let cap = percentile(&scores, p);
        for s in &mut scores {
            *s = s.min(cap);
        }
    }
    Ok(scores)
}

/// Softmax with max subtraction.
pub fn softmax(scores: &[f64], temperature: f64) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| ((s - max) / temperature).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn weights_from_density(densities: &[f64], cfg: &KdeConfig) -> Result<WeightVector> {
    cfg.validate()?;
    let scores = scores_from_density(densities, cfg)?;
    Ok(WeightVector {
        weights: softmax(&scores, cfg.temperature),
        scope: cfg.scope,
    })
}

/// Per-sample audit record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub index: usize,
    pub class: usize,
    pub density: f64,
    pub score: f64,
    pub weight: f64,
}

fn check_subset(table: &EmbeddingTable, indices: &[usize]) -> Result<usize> {
    let &first = indices.first().ok_or(Error::EmptySubset)?;
    for &i in indices {
        if i >= table.len() {
            return Err(Error::Index {
                index: i,
                len: table.len(),
            });
        }
    }
    let class = table.labels[first];
    if let Some(&other) = indices.iter().find(|&&i| table.labels[i] != class) {
        return Err(Error::MixedClasses(class, table.labels[other]));
    }
    Ok(class)
}

/// Density, score and weight of every sample in a single-class subset,
/// computed within that subset.
pub fn weight_rows(
    table: &EmbeddingTable,
    indices: &[usize],
    cfg: &KdeConfig,
    cache: Option<&mut DistanceCache>,
) -> Result<Vec<WeightRow>> {
    let class = check_subset(table, indices)?;
    let dist = match cache {
        Some(c) => c.distances(table, indices)?,
        None => pairwise_distances(table, indices)?,
    };
    let density = kde_density_from_distances(&dist, indices.len(), cfg)?;
    let scores = scores_from_density(&density, cfg)?;
    let weights = softmax(&scores, cfg.temperature);
    Ok(indices
        .iter()
        .enumerate()
        .map(|(k, &index)| WeightRow {
            index,
            class,
            density: density[k],
            score: scores[k],
            weight: weights[k],
        })
        .collect())
}

/// Weights for one real class batch under `cfg.scope`. With a cache, the
/// result is bit-identical to the cache-free computation.
pub fn batch_weights(
    table: &EmbeddingTable,
    indices: &[usize],
    cfg: &KdeConfig,
    cache: Option<&mut DistanceCache>,
) -> Result<WeightVector> {
    let class = check_subset(table, indices)?;
    let weights = match cfg.scope {
        WeightScope::PerClassBatch => weight_rows(table, indices, cfg, cache)?
            .into_iter()
            .map(|r| r.weight)
            .collect(),
        WeightScope::PerClassGlobal => {
            let members: Vec<usize> = (0..table.len()).filter(|&i| table.labels[i] == class).collect();
            let rows = weight_rows(table, &members, cfg, cache)?;
            let mut pos = vec![usize::MAX; table.len()];
            for (k, &m) in members.iter().enumerate() {
                pos[m] = k;
            }
            let picked: Vec<f64> = indices.iter().map(|&i| rows[pos[i]].weight).collect();
            let sum: f64 = picked.iter().sum();
            picked.iter().map(|w| w / sum).collect()
        }
    };
    Ok(WeightVector {
        weights,
        scope: cfg.scope,
    })
}

pub fn write_weight_csv(path: &Path, rows: &[WeightRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn cfg(sigma2: f64, cutoff: Option<f64>) -> KdeConfig {
        KdeConfig {
            sigma2,
            temperature: 0.1,
            cutoff_percentile: cutoff,
            scope: WeightScope::PerClassBatch,
        }
    }

    fn table(vectors: Vec<f64>, dim: usize, labels: Vec<usize>) -> EmbeddingTable {
        EmbeddingTable {
            dim,
            vectors,
            index_map: (0..labels.len()).collect(),
            labels,
            encoder_fingerprint: "test".into(),
            dataset_digest: "test".into(),
        }
    }

    #[test]
    fn single_point_density_is_kernel_peak() {
        let d = kde_density(&[0.3, -0.2], 2, &cfg(0.1, None)).unwrap();
        assert!((d[0] - 1.0 / (0.1f64.sqrt() * (2.0 * std::f64::consts::PI).sqrt())).abs() < 1e-12);
        assert!((d[0] - 1.2616).abs() < 1e-4);
    }

    #[test]
    fn three_point_line() {
        let d = kde_density(&[0.0, 0.0, 1.0], 1, &cfg(0.1, None)).unwrap();
        // (2 K(0) + K(1)) / 3 and (2 K(1) + K(0)) / 3, written out.
        let k0 = 1.0 / (2.0 * std::f64::consts::PI * 0.1).sqrt();
        let k1 = k0 * (-1.0f64 / 0.2).exp();
        assert!((d[0] - (2.0 * k0 + k1) / 3.0).abs() < 1e-12);
        assert!((d[2] - (k0 + 2.0 * k1) / 3.0).abs() < 1e-12);
        assert!((d[0] - 0.8439).abs() < 1e-4 && (d[2] - 0.4262).abs() < 1e-4);

        let w = weights_from_density(&d, &cfg(0.1, None)).unwrap().weights;
        assert!(w[2] > w[0] && w[2] > w[1]);
        let s: Vec<f64> = d.iter().map(|v| 1.0 / v / 0.1).collect();
        let z: f64 = s.iter().map(|v| v.exp()).sum();
        for k in 0..3 {
            assert!((w[k] - s[k].exp() / z).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_points_share_peak_density() {
        let d = kde_density(&[0.5; 12], 3, &cfg(0.1, None)).unwrap();
        let peak = gaussian_kernel(0.0, 0.1);
        assert!(d.iter().all(|&v| v == peak));
    }

    #[test]
    fn equal_densities_give_uniform_weights() {
        let w = weights_from_density(&[0.7; 5], &KdeConfig::default()).unwrap();
        assert!(w.weights.iter().all(|&v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn high_temperature_is_nearly_uniform() {
        let d = [0.3, 1.1, 0.9, 2.0, 0.5, 1.7];
        let c = KdeConfig {
            temperature: 1e3,
            cutoff_percentile: None,
            ..KdeConfig::default()
        };
        let w = weights_from_density(&d, &c).unwrap();
        assert!(w.weights.iter().all(|&v| (v - 1.0 / 6.0).abs() < 1e-3));
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(matches!(kde_density(&[0.0], 1, &cfg(0.0, None)), Err(Error::Config(_))));
        assert!(matches!(
            weights_from_density(&[0.5, 0.0], &KdeConfig::default()),
            Err(Error::Density(_, 1))
        ));
        assert!(matches!(
            weights_from_density(&[0.5], &cfg(0.1, Some(0.0))),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn cutoff_clamps_top_scores() {
        let densities = [1.0, 1.0, 1.0, 0.01];
        let c = cfg(0.1, Some(50.0));
        let s = scores_from_density(&densities, &c).unwrap();
        assert_eq!(s, vec![1.0; 4]);
        assert_eq!(percentile(&[4.0, 1.0, 3.0, 2.0], 50.0), 2.5);
        assert_eq!(percentile(&[4.0, 1.0, 3.0, 2.0], 100.0), 4.0);
    }

    #[test]
    fn singleton_subset_has_unit_weight() {
        let t = table(vec![1.0, 0.0], 2, vec![3]);
        let w = batch_weights(&t, &[0], &KdeConfig::default(), None).unwrap();
        assert_eq!(w.weights, vec![1.0]);
    }

    #[test]
    fn isolated_sample_outweighs_duplicates() {
        for k in 2..=8 {
            let mut v = Vec::new();
            for _ in 0..k {
                v.extend([1.0, 0.0]);
            }
            v.extend([0.0, 1.0]);
            let t = table(v, 2, vec![0; k + 1]);
            let idx: Vec<usize> = (0..=k).collect();
            let w = batch_weights(&t, &idx, &cfg(0.1, None), None).unwrap().weights;
            assert!(w[..k].iter().all(|&d| w[k] > d), "k={k}");
        }
    }

    #[test]
    fn subset_errors() {
        let t = table(vec![1.0, 0.0, 0.0, 1.0], 2, vec![0, 1]);
        assert!(matches!(
            batch_weights(&t, &[], &KdeConfig::default(), None),
            Err(Error::EmptySubset)
        ));
        assert!(matches!(
            batch_weights(&t, &[0, 1], &KdeConfig::default(), None),
            Err(Error::MixedClasses(0, 1))
        ));
    }

    #[test]
    fn cache_and_direct_weights_are_bit_identical() {
        let mut rng = crate::test_util::rng(4);
        let v = crate::test_util::random_vec(&mut rng, 40 * 5, -1.0, 1.0);
        let labels: Vec<usize> = (0..40).map(|i| i % 2).collect();
        let t = table(v, 5, labels);
        let mut cache = DistanceCache::new(&t);
        let idx: Vec<usize> = (0..40).step_by(2).collect();
        for scope in [WeightScope::PerClassBatch, WeightScope::PerClassGlobal] {
            let c = KdeConfig {
                scope,
                ..KdeConfig::default()
            };
            let a = batch_weights(&t, &idx, &c, None).unwrap();
            let b = batch_weights(&t, &idx, &c, Some(&mut cache)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn global_scope_renormalizes_class_weights() {
        let t = table(vec![0.0, 0.1, 0.2, 5.0], 1, vec![0; 4]);
        let c = KdeConfig {
            scope: WeightScope::PerClassGlobal,
            cutoff_percentile: None,
            ..KdeConfig::default()
        };
        let all = batch_weights(&t, &[0, 1, 2, 3], &c, None).unwrap().weights;
        let part = batch_weights(&t, &[1, 3], &c, None).unwrap().weights;
        let s = all[1] + all[3];
        assert!((part[0] - all[1] / s).abs() < 1e-15 && (part[1] - all[3] / s).abs() < 1e-15);
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let t = table(vec![0.0, 1.0, 3.0], 1, vec![2; 3]);
        let rows = weight_rows(&t, &[0, 1, 2], &KdeConfig::default(), None).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.csv");
        write_weight_csv(&p, &rows).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("index,class,density,score,weight\n"));
        assert_eq!(text.lines().count(), 4);
    }

    fn oracle_density(points: &[Vec<f64>], sigma2: f64) -> Vec<f64> {
        let n = points.len() as f64;
        points
            .iter()
            .map(|x| {
                points
                    .iter()
                    .map(|y| {
                        let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
                        (-sq / (2.0 * sigma2)).exp() / (2.0 * std::f64::consts::PI * sigma2).sqrt()
                    })
                    .sum::<f64>()
                    / n
            })
            .collect()
    }

    proptest! {
        #[test]
        fn density_matches_double_loop(
            pts in (1usize..=8).prop_flat_map(|d| prop::collection::vec(prop::collection::vec(-2.0f64..2.0, d), 1..=64)),
            s in prop::sample::select(vec![0.01, 0.1, 1.0]),
        ) {
            let dim = pts[0].len();
            let flat: Vec<f64> = pts.concat();
            let got = kde_density(&flat, dim, &cfg(s, None)).unwrap();
            for (g, o) in got.iter().zip(oracle_density(&pts, s)) {
                prop_assert!((g - o).abs() <= 1e-9 * o.abs());
            }
        }

        #[test]
        fn weights_are_a_distribution_and_monotone(d in prop::collection::vec(0.01f64..5.0, 1..40)) {
            let c = KdeConfig { cutoff_percentile: None, temperature: 10.0, ..KdeConfig::default() };
            let w = weights_from_density(&d, &c).unwrap().weights;
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(w.iter().all(|&v| v >= 0.0));
            for i in 0..d.len() {
                for j in 0..d.len() {
                    if d[i] < d[j] {
                        prop_assert!(w[i] >= w[j]);
                    }
                }
            }
        }

        #[test]
        fn weights_follow_permutation(d in prop::collection::vec(0.05f64..5.0, 2..20), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let mut perm: Vec<usize> = (0..d.len()).collect();
            perm.shuffle(&mut crate::test_util::rng(seed));
            let pd: Vec<f64> = perm.iter().map(|&i| d[i]).collect();
            let c = KdeConfig::default();
            let w = weights_from_density(&d, &c).unwrap().weights;
            let pw = weights_from_density(&pd, &c).unwrap().weights;
            for (k, &i) in perm.iter().enumerate() {
                prop_assert!((pw[k] - w[i]).abs() <= 1e-12 * w[i].max(1e-300));
            }
        }

        #[test]
        fn duplicate_lowers_weight_against_isolated(pts in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 2), 2..12), pick in any::<prop::sample::Index>()) {
            let c = cfg(0.1, None);
            let i = pick.index(pts.len());
            let mut base = pts.clone();
            base.push(vec![100.0, 100.0]);
            let iso = base.len() - 1;
            let w = weights_from_density(&kde_density(&base.concat(), 2, &c).unwrap(), &c).unwrap().weights;
            let mut dup = base.clone();
            dup.push(pts[i].clone());
            let wd = weights_from_density(&kde_density(&dup.concat(), 2, &c).unwrap(), &c).unwrap().weights;
            prop_assert!(wd[i] / wd[iso] <= w[i] / w[iso] * (1.0 + 1e-9));
        }
    }
}
