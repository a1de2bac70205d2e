//! Clustering accuracy, the end-to-end pipeline and the experiment drivers.

mod assignment;
mod experiments;

pub use assignment::min_cost_assignment;
pub use experiments::*;

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::euclidean_index::{KnnTable, SpatialIndex};
use crate::path_metrics::PowerParam;
use crate::similarity::{
    self, knn_similarity_from_neighbors, neighbors_from_table, others_needed,
    unweighted_from_neighbors, Similarity, SimilarityVariant,
};
use crate::spectral::{spectral_cluster, ClusteringResult, SpectralConfig};

fn dense_labels(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map = BTreeMap::new();
    for &l in labels {
        map.insert(l, 0);
    }
    for (rank, v) in map.values_mut().enumerate() {
        *v = rank;
    }
    (labels.iter().map(|l| map[l]).collect(), map.len())
}

/// Fraction of points labeled correctly under the best one-to-one
/// matching between predicted and true labels.
///
/// Label values are arbitrary; each side is renumbered densely and the
/// contingency table padded to square before matching.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    if predicted.is_empty() {
        return Err(Error::InvalidParameter("accuracy of an empty labeling".into()));
    }
    let (pred, a) = dense_labels(predicted);
    let (true_, b) = dense_labels(truth);
    let m = a.max(b);
    let mut counts = vec![0i64; m * m];
    for (&p, &t) in pred.iter().zip(&true_) {
        counts[p * m + t] += 1;
    }
    let cost: Vec<i64> = counts.iter().map(|&c| -c).collect();
    let matched: i64 = min_cost_assignment(&cost, m)
        .iter()
        .enumerate()
        .map(|(p, &t)| counts[p * m + t])
        .sum();
    Ok(matched as f64 / predicted.len() as f64)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (`n − 1` denominator); 0 for fewer than two
/// values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Lower quartile, median and upper quartile (linear interpolation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

impl Quartiles {
    pub fn of(xs: &[f64]) -> Self {
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        let at = |q: f64| {
            if sorted.is_empty() {
                return f64::NAN;
            }
            let pos = q * (sorted.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
        };
        Self {
            q1: at(0.25),
            median: at(0.5),
            q3: at(0.75),
        }
    }
}

/// One clustering run: similarity variant, metric and spectral settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub variant: SimilarityVariant,
    pub p: PowerParam,
    pub k: usize,
    pub r: usize,
    pub spectral: SpectralConfig,
}

impl PipelineConfig {
    pub fn new(variant: SimilarityVariant, p: PowerParam, clusters: usize, seed: u64) -> Self {
        Self {
            variant,
            p,
            k: similarity::DEFAULT_K,
            r: similarity::DEFAULT_R,
            spectral: SpectralConfig::new(clusters, seed),
        }
    }

    /// Euclidean neighbors per point the similarity build needs.
    pub fn table_size(&self) -> usize {
        match self.variant {
            SimilarityVariant::Full => 0,
            SimilarityVariant::Knn => others_needed(self.k, self.r),
            SimilarityVariant::Unweighted => self.k - 1,
        }
    }
}

/// Builds the similarity graph for `config`, reusing `table` when it holds
/// enough Euclidean neighbors.
pub fn build_similarity(
    data: &Dataset,
    config: &PipelineConfig,
    table: Option<&KnnTable>,
) -> Result<Similarity> {
    if config.variant == SimilarityVariant::Full {
        if !config.p.is_euclidean() {
            return Err(Error::InvalidParameter(format!(
                "the full similarity is Euclidean only, got p = {}",
                config.p
            )));
        }
        return Ok(similarity::build_full_similarity(data, config.r)?.into());
    }
    if config.k < 2 || config.k >= data.len() {
        return Err(Error::InvalidParameter(format!(
            "k = {} needs 2 <= k < n = {}",
            config.k,
            data.len()
        )));
    }
    let need = config.table_size();
    let owned;
    let table = match table {
        Some(t) if t.k() >= need => t,
        _ => {
            owned = SpatialIndex::build(data).knn_table(need)?;
            &owned
        }
    };
    let lists = neighbors_from_table(data, table, need, config.p)?;
    let sim = match config.variant {
        SimilarityVariant::Knn => {
            knn_similarity_from_neighbors(data, &lists, config.k, config.r, config.p)?
        }
        _ => unweighted_from_neighbors(data.len(), &lists, config.k, config.p)?,
    };
    Ok(sim.into())
}

/// Similarity build followed by spectral clustering. Accuracy is filled in
/// when the dataset carries labels. Graph time includes the Euclidean
/// neighbor table unless one is passed in.
pub fn run_pipeline(
    data: &Dataset,
    config: &PipelineConfig,
    table: Option<&KnnTable>,
) -> Result<ClusteringResult> {
    let start = Instant::now();
    let sim = build_similarity(data, config, table)?;
    let graph_secs = start.elapsed().as_secs_f64();
    let mut result = spectral_cluster(&sim, &config.spectral, data.labels())?;
    result.timings.graph_secs = graph_secs;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate, SyntheticFamily, SyntheticSpec};

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0, 1, 2, 2], &[0, 1, 2, 2]).unwrap(), 1.0);
        assert_eq!(accuracy(&[2, 0, 1, 1], &[0, 1, 2, 2]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 1, 1, 1], &[0, 0, 1, 1]).unwrap(), 0.75);
        assert_eq!(accuracy(&[7, 7, 9], &[0, 1, 2]).unwrap(), 2.0 / 3.0);
        assert!(accuracy(&[0, 1], &[0]).is_err());
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn accuracy_matches_exhaustive_search() {
        fn perms(m: usize) -> Vec<Vec<usize>> {
            if m == 0 {
                return vec![vec![]];
            }
            let mut out = Vec::new();
            for p in perms(m - 1) {
                for pos in 0..m {
                    let mut q = p.clone();
                    q.insert(pos, m - 1);
                    out.push(q);
                }
            }
            out
        }
        let mut rng = crate::seed::rng(3);
        use rand::Rng;
        for m in 1..=5 {
            for _ in 0..20 {
                let truth: Vec<usize> = (0..40).map(|_| rng.gen_range(0..m)).collect();
                let pred: Vec<usize> = (0..40).map(|_| rng.gen_range(0..m)).collect();
                let best = perms(m)
                    .iter()
                    .map(|perm| pred.iter().zip(&truth).filter(|(&p, &t)| perm[p] == t).count())
                    .max()
                    .unwrap();
                let acc = accuracy(&pred, &truth).unwrap();
                assert!((acc - best as f64 / 40.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn summary_statistics() {
        assert_eq!(mean(&[1.0, 2.0, 3.0]), 2.0);
        assert!((std_dev(&[1.0, 2.0, 3.0, 4.0]) - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(std_dev(&[4.0]), 0.0);
        let q = Quartiles::of(&[5.0, 1.0, 3.0, 2.0, 4.0]);
        assert_eq!((q.q1, q.median, q.q3), (2.0, 3.0, 4.0));
        assert_eq!(Quartiles::of(&[1.0, 2.0]).median, 1.5);
    }

    /// Three evenly spaced chains of `per` points, 0.1 apart, on parallel
    /// lines 10 apart.
    pub(crate) fn chains(per: usize) -> Dataset {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for c in 0..3 {
            for i in 0..per {
                rows.push(vec![0.1 * i as f64, 10.0 * c as f64]);
                labels.push(c);
            }
        }
        Dataset::from_rows("chains", &rows, Some(labels)).unwrap()
    }

    #[test]
    fn pipeline_separates_chains() {
        let data = chains(40);
        for p in [PowerParam::EUCLIDEAN, PowerParam::finite(2.0).unwrap(), PowerParam::Infinity] {
            let config = PipelineConfig::new(SimilarityVariant::Knn, p, 3, 1);
            let r = run_pipeline(&data, &config, None).unwrap();
            assert_eq!(r.accuracy, Some(1.0), "p = {p}");
            assert!(r.timings.graph_secs >= 0.0);
        }
        let config = PipelineConfig::new(SimilarityVariant::Unweighted, PowerParam::Infinity, 3, 1);
        assert_eq!(run_pipeline(&data, &config, None).unwrap().accuracy, Some(1.0));
    }

    #[test]
    fn full_variant_rejects_non_euclidean() {
        let data = generate(
            &SyntheticSpec::new(SyntheticFamily::ThreeLines, 0)
                .with_points_per_cluster(10)
                .with_dim(2),
        )
        .unwrap();
        let mut config = PipelineConfig::new(SimilarityVariant::Full, PowerParam::Infinity, 3, 0);
        assert!(run_pipeline(&data, &config, None).is_err());
        config.p = PowerParam::EUCLIDEAN;
        assert!(run_pipeline(&data, &config, None).unwrap().accuracy.is_some());
    }
}
