//! Density-sensitive distances for clustering point clouds.
//!
//! The power-weighted shortest-path metric `d^(p)` measures the distance
//! between two points as the cheapest path through the dataset when each
//! hop of Euclidean length `ℓ` costs `ℓ^p`. As `p` grows, paths through
//! dense regions win and points on the same low-dimensional manifold pull
//! together; `p = ∞` gives the longest-leg path distance. `p = 1` is the
//! Euclidean distance.
//!
//! The pieces, bottom up:
//!
//! - [`dataset`]: point clouds, synthetic manifold families, CSV I/O.
//! - [`euclidean_index`]: exact Euclidean k-NN on a k-d tree.
//! - [`path_metrics`]: path lengths and the O(n³) exact oracle.
//! - [`path_knn`]: k nearest neighbors under `d^(p)` in `O(k²)` Euclidean
//!   queries per point.
//! - [`similarity`]: locally scaled k-NN similarity graphs.
//! - [`spectral`]: normalized spectral clustering.
//! - [`eval`]: accuracy and the benchmark experiments.

pub mod dataset;
pub mod error;
pub mod euclidean_index;
pub mod eval;
pub mod path_knn;
pub mod path_metrics;
pub mod seed;
pub mod similarity;
pub mod spectral;

pub use dataset::{Dataset, SyntheticFamily, SyntheticSpec};
pub use error::{Error, Result};
pub use euclidean_index::{knn_brute, KnnTable, Neighbor, NeighborList, SpatialIndex};
pub use path_knn::{path_knn, path_knn_all, PathKnnOptions, PathNeighborResult};
pub use path_metrics::{pairwise_exact, path_length, DistanceMatrix, Path, PowerParam};
pub use eval::{accuracy, run_pipeline, PipelineConfig};
pub use similarity::{Similarity, SimilarityVariant};
pub use spectral::{spectral_cluster, ClusteringResult, SpectralConfig};
