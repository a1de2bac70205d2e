//! Normalized spectral clustering (Ng–Jordan–Weiss).
//!
//! Given a symmetric non-negative similarity `A` with degrees `dᵢ`, form
//! `M = D^{-1/2} A D^{-1/2}`, take its `ℓ` leading eigenvectors as the
//! columns of an `n × ℓ` embedding, scale every row to unit length and run
//! k-means on the rows.
//!
//! Vertices of zero degree get degree `f64::EPSILON`; their embedding rows
//! are zero, left unnormalized and reported in
//! [`ClusteringResult::zero_rows`]. k-means places them at the nearest
//! center.

pub mod eigen;
pub mod kmeans;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::accuracy;
use crate::similarity::Similarity;

use eigen::{CsrMatrix, DenseMatrix, EigenPairs, IterativeOptions, LinearOperator};
use kmeans::KMeansConfig;

/// Above this size `Auto` switches from the dense to the iterative solver.
pub const DENSE_SOLVER_MAX_N: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EigenSolver {
    Auto,
    Dense,
    Iterative,
}

impl fmt::Display for EigenSolver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Auto => "auto",
            Self::Dense => "dense",
            Self::Iterative => "iterative",
        })
    }
}

impl FromStr for EigenSolver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "dense" => Ok(Self::Dense),
            "iterative" | "lanczos" => Ok(Self::Iterative),
            other => Err(Error::InvalidParameter(format!("unknown eigensolver `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralConfig {
    pub num_clusters: usize,
    pub eigsolver: EigenSolver,
    pub kmeans_restarts: usize,
    pub kmeans_max_iter: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub max_matvecs: usize,
}

impl SpectralConfig {
    pub fn new(num_clusters: usize, seed: u64) -> Self {
        Self {
            num_clusters,
            eigsolver: EigenSolver::Auto,
            kmeans_restarts: 10,
            kmeans_max_iter: 300,
            seed,
            tolerance: 1e-8,
            max_matvecs: 5000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_clusters < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 clusters, got {}",
                self.num_clusters
            )));
        }
        if self.kmeans_restarts == 0 {
            return Err(Error::InvalidParameter("k-means restarts must be at least 1".into()));
        }
        Ok(())
    }
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub graph_secs: f64,
    pub eigen_secs: f64,
    pub kmeans_secs: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.graph_secs + self.eigen_secs + self.kmeans_secs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub labels: Vec<usize>,
    pub accuracy: Option<f64>,
    pub timings: StageTimings,
    pub config: SpectralConfig,
    /// Leading eigenvalues of the normalized operator, descending.
    pub eigenvalues: Vec<f64>,
    pub zero_degree: Vec<usize>,
    pub zero_rows: Vec<usize>,
    pub wcss: f64,
}

/// The normalized operator `D^{-1/2} A D^{-1/2}` with its degree data.
pub struct NormalizedOperator {
    op: Box<dyn LinearOperator>,
    dense: Option<DenseMatrix>,
    pub zero_degree: Vec<usize>,
}

impl NormalizedOperator {
    pub fn new(similarity: &Similarity) -> Self {
        let mut degrees = similarity.row_sums();
        let mut zero_degree = Vec::new();
        for (i, d) in degrees.iter_mut().enumerate() {
            if *d <= 0.0 {
                zero_degree.push(i);
                *d = f64::EPSILON;
            }
        }
        let inv_sqrt: Vec<f64> = degrees.iter().map(|d| 1.0 / d.sqrt()).collect();
        let n = similarity.n();
        match similarity {
            Similarity::Sparse(s) => {
                let (row_ptr, cols, weights) = s.csr();
                let mut values = Vec::with_capacity(weights.len());
                for i in 0..n {
                    for pos in row_ptr[i]..row_ptr[i + 1] {
                        values.push(weights[pos] * inv_sqrt[i] * inv_sqrt[cols[pos]]);
                    }
                }
                Self {
                    op: Box::new(CsrMatrix {
                        n,
                        row_ptr: row_ptr.to_vec(),
                        cols: cols.to_vec(),
                        values,
                    }),
                    dense: None,
                    zero_degree,
                }
            }
            Similarity::Dense(d) => {
                let mut values = d.values().to_vec();
                for (i, row) in values.chunks_mut(n).enumerate() {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v *= inv_sqrt[i] * inv_sqrt[j];
                    }
                }
                let m = DenseMatrix { n, values };
                Self {
                    op: Box::new(m.clone()),
                    dense: Some(m),
                    zero_degree,
                }
            }
        }
    }

    pub fn operator(&self) -> &dyn LinearOperator {
        self.op.as_ref()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        if let Some(d) = &self.dense {
            return d.clone();
        }
        let n = self.op.dim();
        let mut values = vec![0.0; n * n];
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.op.apply(&e, &mut col);
            e[j] = 0.0;
            for i in 0..n {
                values[i * n + j] = col[i];
            }
        }
        DenseMatrix { n, values }
    }

    /// Leading `count` eigenpairs with the configured solver.
    pub fn top_eigenpairs(&self, count: usize, config: &SpectralConfig) -> Result<EigenPairs> {
        let n = self.op.dim();
        let dense = match config.eigsolver {
            EigenSolver::Dense => true,
            EigenSolver::Iterative => false,
            EigenSolver::Auto => n <= DENSE_SOLVER_MAX_N,
        };
        if dense {
            eigen::dense_top_eigenpairs(&self.to_dense(), count)
        } else {
            let options = IterativeOptions {
                tolerance: config.tolerance,
                max_matvecs: config.max_matvecs,
                seed: config.seed,
            };
            eigen::iterative_top_eigenpairs(self.operator(), count, options)
        }
    }
}

/// Unit-normalizes the rows of the `n × ℓ` embedding built from `vectors`.
/// Returns the row-major embedding and the indices of (near-)zero rows.
pub fn row_normalized_embedding(vectors: &[Vec<f64>]) -> (Vec<f64>, Vec<usize>) {
    let ell = vectors.len();
    let n = vectors.first().map_or(0, Vec::len);
    let mut rows = vec![0.0; n * ell];
    let mut zero_rows = Vec::new();
    for i in 0..n {
        let row = &mut rows[i * ell..(i + 1) * ell];
        for (c, v) in vectors.iter().enumerate() {
            row[c] = v[i];
        }
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            row.iter_mut().for_each(|x| *x /= norm);
        } else {
            zero_rows.push(i);
        }
    }
    (rows, zero_rows)
}

/// Clusters the vertices of `similarity` into `config.num_clusters`
/// groups. When `truth` is given the result carries the accuracy.
pub fn spectral_cluster(
    similarity: &Similarity,
    config: &SpectralConfig,
    truth: Option<&[usize]>,
) -> Result<ClusteringResult> {
    config.validate()?;
    let n = similarity.n();
    let ell = config.num_clusters;
    if ell > n {
        return Err(Error::InvalidParameter(format!(
            "{ell} clusters requested for {n} points"
        )));
    }
    if let Some(t) = truth {
        if t.len() != n {
            return Err(Error::LengthMismatch {
                left: t.len(),
                right: n,
            });
        }
    }

    let start = Instant::now();
    let operator = NormalizedOperator::new(similarity);
    let pairs = operator.top_eigenpairs(ell, config)?;
    let eigen_secs = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let (rows, zero_rows) = row_normalized_embedding(&pairs.vectors);
    let km = kmeans::kmeans(
        &rows,
        ell,
        &KMeansConfig {
            clusters: ell,
            restarts: config.kmeans_restarts,
            max_iter: config.kmeans_max_iter,
            seed: config.seed,
        },
    )?;
    let kmeans_secs = start.elapsed().as_secs_f64();

    let accuracy = truth.map(|t| accuracy(&km.labels, t)).transpose()?;
    Ok(ClusteringResult {
        labels: km.labels,
        accuracy,
        timings: StageTimings {
            graph_secs: 0.0,
            eigen_secs,
            kmeans_secs,
        },
        config: *config,
        eigenvalues: pairs.values,
        zero_degree: operator.zero_degree,
        zero_rows,
        wcss: km.wcss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::path_metrics::PowerParam;
    use crate::similarity::{SimilarityMeta, SimilarityVariant, SparseSimilarity};

    fn meta() -> SimilarityMeta {
        SimilarityMeta {
            variant: SimilarityVariant::Knn,
            p: PowerParam::EUCLIDEAN,
            k: None,
            r: None,
        }
    }

    fn blocks(sizes: &[usize]) -> (Similarity, Vec<usize>) {
        let mut directed = Vec::new();
        let mut truth = Vec::new();
        let mut start = 0;
        for (b, &s) in sizes.iter().enumerate() {
            for i in start..start + s {
                truth.push(b);
                for j in start..start + s {
                    if i < j {
                        directed.push((i, j, 1.0));
                    }
                }
            }
            start += s;
        }
        let s = SparseSimilarity::from_directed(start, directed, meta()).unwrap();
        (s.into(), truth)
    }

    #[test]
    fn recovers_two_blocks() {
        let (sim, truth) = blocks(&[3, 4]);
        for solver in [EigenSolver::Dense, EigenSolver::Iterative] {
            let mut config = SpectralConfig::new(2, 1);
            config.eigsolver = solver;
            let r = spectral_cluster(&sim, &config, Some(&truth)).unwrap();
            assert_eq!(r.accuracy, Some(1.0));
            assert!(r.eigenvalues.iter().all(|v| (v - 1.0).abs() < 1e-10));
        }
    }

    #[test]
    fn permutation_moves_labels_with_points() {
        let (sim, truth) = blocks(&[30, 40, 50]);
        let n = truth.len();
        let perm: Vec<usize> = (0..n).map(|i| (i * 37) % n).collect();
        let dense = sim.to_dense();
        let directed: Vec<_> = (0..n)
            .flat_map(|a| (0..n).map(move |b| (a, b)))
            .filter(|&(a, b)| a < b)
            .map(|(a, b)| (a, b, dense[perm[a] * n + perm[b]]))
            .filter(|t| t.2 > 0.0)
            .collect();
        let permuted: Similarity = SparseSimilarity::from_directed(n, directed, meta()).unwrap().into();
        let config = SpectralConfig::new(3, 4);
        let a = spectral_cluster(&sim, &config, None).unwrap();
        let b = spectral_cluster(&permuted, &config, None).unwrap();
        let relabeled: Vec<usize> = (0..n).map(|i| a.labels[perm[i]]).collect();
        assert_eq!(accuracy(&relabeled, &b.labels).unwrap(), 1.0);
    }

    #[test]
    fn isolated_vertex_is_flagged_not_fatal() {
        let directed = vec![(0, 1, 1.0), (1, 2, 1.0), (3, 4, 1.0), (4, 5, 1.0)];
        let sim: Similarity = SparseSimilarity::from_directed(7, directed, meta()).unwrap().into();
        let r = spectral_cluster(&sim, &SpectralConfig::new(2, 0), None).unwrap();
        assert_eq!(r.zero_degree, vec![6]);
        assert_eq!(r.labels.len(), 7);
    }

    #[test]
    fn rejects_bad_config() {
        let (sim, _) = blocks(&[3, 4]);
        assert!(spectral_cluster(&sim, &SpectralConfig::new(1, 0), None).is_err());
        assert!(spectral_cluster(&sim, &SpectralConfig::new(8, 0), None).is_err());
        assert!(spectral_cluster(&sim, &SpectralConfig::new(2, 0), Some(&[0, 1])).is_err());
    }

    #[test]
    fn embedding_rows_are_unit_or_flagged() {
        let vectors = vec![vec![3.0, 0.0, 1.0], vec![4.0, 0.0, 0.0]];
        let (rows, zero) = row_normalized_embedding(&vectors);
        assert_eq!(zero, vec![1]);
        assert!((rows[0] - 0.6).abs() < 1e-15 && (rows[1] - 0.8).abs() < 1e-15);
        assert_eq!(&rows[4..6], &[1.0, 0.0]);
    }
}
