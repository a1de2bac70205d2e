//! Similarity graphs built from path-metric neighborhoods.
//!
//! Weights use the locally scaled Gaussian kernel
//! `exp(−d(xᵢ,xⱼ)² / (σᵢσⱼ))`, with `σᵢ` the distance from `xᵢ` to its
//! `r`-th nearest other point under the same metric. The k-NN variants
//! keep an entry only when one point is among the other's `k` nearest
//! (counting the point itself) and symmetrize by taking the larger weight.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{squared_distance, Dataset};
use crate::error::{Error, Result};
use crate::euclidean_index::{KnnTable, Neighbor, SpatialIndex};
use crate::path_knn::{path_knn_all_from_table, PathKnnOptions};
use crate::path_metrics::PowerParam;

pub const DEFAULT_K: usize = 15;
pub const DEFAULT_R: usize = 10;
/// Largest `n` for which a dense matrix is built.
pub const DEFAULT_DENSE_CAP: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityVariant {
    /// Dense Euclidean kernel matrix.
    Full,
    /// Weighted k-NN graph under `d^(p)`.
    Knn,
    /// 0/1 k-NN graph under `d^(p)`.
    Unweighted,
}

impl fmt::Display for SimilarityVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::Knn => "knn",
            Self::Unweighted => "unweighted",
        })
    }
}

impl FromStr for SimilarityVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(Self::Full),
            "knn" => Ok(Self::Knn),
            "unweighted" | "uw" => Ok(Self::Unweighted),
            other => Err(Error::InvalidParameter(format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMeta {
    pub variant: SimilarityVariant,
    pub p: PowerParam,
    pub k: Option<usize>,
    pub r: Option<usize>,
}

/// Symmetric sparse similarity in canonical coordinate form: entries are
/// sorted by `(row, col)`, unique, off-diagonal, and stored in both
/// orientations.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSimilarity {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
    meta: SimilarityMeta,
}

impl SparseSimilarity {
    /// Symmetrizes directed entries `(i, j, w)` by `A_ij = max(w_ij, w_ji)`.
    /// Diagonal entries are dropped.
    pub fn from_directed(
        n: usize,
        directed: impl IntoIterator<Item = (usize, usize, f64)>,
        meta: SimilarityMeta,
    ) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, j, w) in directed {
            if i >= n || j >= n {
                return Err(Error::IndexOutOfRange { index: i.max(j), n });
            }
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "weight {w} at ({i}, {j}) is not a finite non-negative number"
                )));
            }
            if i != j {
                entries.push((i, j, w));
                entries.push((j, i, w));
            }
        }
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::with_capacity(entries.len());
        let mut weights: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last = None;
        for (i, j, w) in entries {
            if last == Some((i, j)) {
                let top = weights.last_mut().expect("entry pushed for this key");
                *top = top.max(w);
                continue;
            }
            last = Some((i, j));
            row_ptr[i + 1] += 1;
            cols.push(j);
            weights.push(w);
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self {
            n,
            row_ptr,
            cols,
            weights,
            meta,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Stored entries, counting both orientations.
    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn meta(&self) -> &SimilarityMeta {
        &self.meta
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[range.clone()]
            .iter()
            .copied()
            .zip(self.weights[range].iter().copied())
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[range.clone()].binary_search(&j) {
            Ok(pos) => self.weights[range.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| self.row(i).map(move |(j, w)| (i, j, w)))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(_, w)| w).sum()).collect()
    }

    pub(crate) fn csr(&self) -> (&[usize], &[usize], &[f64]) {
        (&self.row_ptr, &self.cols, &self.weights)
    }

    /// One `i j weight` line per stored entry.
    pub fn write_triplets<W: Write>(&self, out: &mut W) -> Result<()> {
        for (i, j, w) in self.triplets() {
            writeln!(out, "{i} {j} {w}")?;
        }
        Ok(())
    }
}

/// Dense symmetric similarity with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSimilarity {
    n: usize,
    values: Vec<f64>,
    meta: SimilarityMeta,
}

impl DenseSimilarity {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn meta(&self) -> &SimilarityMeta {
        &self.meta
    }
}

/// Either representation, as consumed by spectral clustering.
#[derive(Debug, Clone, PartialEq)]
pub enum Similarity {
    Sparse(SparseSimilarity),
    Dense(DenseSimilarity),
}

impl Similarity {
    pub fn n(&self) -> usize {
        match self {
            Self::Sparse(s) => s.n(),
            Self::Dense(d) => d.n(),
        }
    }

    pub fn meta(&self) -> &SimilarityMeta {
        match self {
            Self::Sparse(s) => s.meta(),
            Self::Dense(d) => d.meta(),
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        match self {
            Self::Sparse(s) => s.row_sums(),
            Self::Dense(d) => d.values.chunks(d.n).map(|r| r.iter().sum()).collect(),
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        match self {
            Self::Dense(d) => d.values.clone(),
            Self::Sparse(s) => {
                let mut out = vec![0.0; s.n * s.n];
                for (i, j, w) in s.triplets() {
                    out[i * s.n + j] = w;
                }
                out
            }
        }
    }
}

impl From<SparseSimilarity> for Similarity {
    fn from(s: SparseSimilarity) -> Self {
        Self::Sparse(s)
    }
}

impl From<DenseSimilarity> for Similarity {
    fn from(d: DenseSimilarity) -> Self {
        Self::Dense(d)
    }
}

/// Locally scaled Gaussian weight. Coincident points get weight 1 and the
/// result never underflows to 0.
#[inline]
pub fn kernel(distance: f64, sigma_i: f64, sigma_j: f64) -> f64 {
    if distance == 0.0 {
        return 1.0;
    }
    (-(distance * distance) / (sigma_i * sigma_j))
        .exp()
        .max(f64::MIN_POSITIVE)
}

/// Lower bound for a local scale; keeps kernels finite when the `r`-th
/// neighbor coincides with the point.
pub fn sigma_floor(data: &Dataset) -> f64 {
    let diameter = data.bounding_diagonal();
    f64::EPSILON * if diameter > 0.0 { diameter } else { 1.0 }
}

fn check_k_r(n: usize, k: usize, r: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!(
            "k = {k}: the neighbor set counts the point itself, so k must be at least 2"
        )));
    }
    if k >= n {
        return Err(Error::TooManyNeighbors { k, n });
    }
    if r == 0 || r > k {
        return Err(Error::InvalidParameter(format!(
            "scale neighbor r = {r} must lie in 1..={k}"
        )));
    }
    Ok(())
}

/// Path-metric neighbors of every point, other points only, at least
/// `others` per point.
fn other_neighbors(
    index: &SpatialIndex,
    others: usize,
    p: PowerParam,
) -> Result<Vec<Vec<Neighbor>>> {
    let table = index.knn_table(others)?;
    neighbors_from_table(index.data(), &table, others, p)
}

/// As above, reusing a Euclidean table with at least `others` neighbors.
pub fn neighbors_from_table(
    data: &Dataset,
    table: &KnnTable,
    others: usize,
    p: PowerParam,
) -> Result<Vec<Vec<Neighbor>>> {
    let options = PathKnnOptions {
        include_source: false,
    };
    Ok(path_knn_all_from_table(data, table, others, p, options)?
        .into_iter()
        .map(|r| r.neighbors)
        .collect())
}

/// Number of other neighbors needed for given `k` and `r`.
pub fn others_needed(k: usize, r: usize) -> usize {
    (k - 1).max(r)
}

/// Weighted k-NN similarity under `d^(p)`.
pub fn build_knn_similarity(
    index: &SpatialIndex,
    k: usize,
    r: usize,
    p: PowerParam,
) -> Result<SparseSimilarity> {
    check_k_r(index.len(), k, r)?;
    let lists = other_neighbors(index, others_needed(k, r), p)?;
    knn_similarity_from_neighbors(index.data(), &lists, k, r, p)
}

/// Weighted k-NN similarity from precomputed path neighbors. `lists[i]`
/// holds the nearest points other than `i`, ascending.
pub fn knn_similarity_from_neighbors(
    data: &Dataset,
    lists: &[Vec<Neighbor>],
    k: usize,
    r: usize,
    p: PowerParam,
) -> Result<SparseSimilarity> {
    let n = data.len();
    check_k_r(n, k, r)?;
    let need = others_needed(k, r);
    if lists.len() != n || lists.iter().any(|l| l.len() < need) {
        return Err(Error::InvalidParameter(format!(
            "need {need} neighbors for each of {n} points"
        )));
    }
    let floor = sigma_floor(data);
    let sigma: Vec<f64> = lists
        .iter()
        .map(|l| l[r - 1].distance.max(floor))
        .collect();
    let directed: Vec<(usize, usize, f64)> = lists
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, l)| {
            let sigma = &sigma;
            l[..k - 1]
                .iter()
                .map(move |nb| (i, nb.index, kernel(nb.distance, sigma[i], sigma[nb.index])))
        })
        .collect();
    let meta = SimilarityMeta {
        variant: SimilarityVariant::Knn,
        p,
        k: Some(k),
        r: Some(r),
    };
    SparseSimilarity::from_directed(n, directed, meta)
}

/// 0/1 k-NN graph under `d^(p)`: `A_ij = 1` iff either point is among the
/// other's `k` nearest.
pub fn build_unweighted_knn(
    index: &SpatialIndex,
    k: usize,
    p: PowerParam,
) -> Result<SparseSimilarity> {
    check_k_r(index.len(), k, 1)?;
    let lists = other_neighbors(index, k - 1, p)?;
    unweighted_from_neighbors(index.len(), &lists, k, p)
}

pub fn unweighted_from_neighbors(
    n: usize,
    lists: &[Vec<Neighbor>],
    k: usize,
    p: PowerParam,
) -> Result<SparseSimilarity> {
    check_k_r(n, k, 1)?;
    let directed = lists
        .iter()
        .enumerate()
        .flat_map(|(i, l)| l[..k - 1].iter().map(move |nb| (i, nb.index, 1.0)));
    let meta = SimilarityMeta {
        variant: SimilarityVariant::Unweighted,
        p,
        k: Some(k),
        r: None,
    };
    SparseSimilarity::from_directed(n, directed, meta)
}

/// Dense Euclidean locally scaled kernel matrix.
pub fn build_full_similarity(data: &Dataset, r: usize) -> Result<DenseSimilarity> {
    build_full_similarity_with_cap(data, r, DEFAULT_DENSE_CAP)
}

pub fn build_full_similarity_with_cap(
    data: &Dataset,
    r: usize,
    cap: usize,
) -> Result<DenseSimilarity> {
    let n = data.len();
    if n > cap {
        return Err(Error::CapExceeded {
            what: "dense similarity matrix",
            n,
            cap,
            hint: "use a k-NN similarity instead",
        });
    }
    if r == 0 || r >= n {
        return Err(Error::InvalidParameter(format!(
            "scale neighbor r = {r} must lie in 1..{n}"
        )));
    }
    let mut dist: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let xi = data.point(i);
            (0..n).map(move |j| squared_distance(xi, data.point(j)).sqrt())
        })
        .collect();
    let floor = sigma_floor(data);
    let sigma: Vec<f64> = dist
        .par_chunks(n)
        .enumerate()
        .map(|(i, row)| {
            let mut others: Vec<f64> = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &d)| d)
                .collect();
            let (_, rth, _) = others.select_nth_unstable_by(r - 1, f64::total_cmp);
            rth.max(floor)
        })
        .collect();
    dist.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, v) in row.iter_mut().enumerate() {
            *v = if i == j {
                0.0
            } else {
                kernel(*v, sigma[i], sigma[j])
            };
        }
    });
    Ok(DenseSimilarity {
        n,
        values: dist,
        meta: SimilarityMeta {
            variant: SimilarityVariant::Full,
            p: PowerParam::EUCLIDEAN,
            k: None,
            r: Some(r),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate, SyntheticFamily, SyntheticSpec};
    use crate::euclidean_index::knn_brute;
    use crate::seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_dataset(n: usize, dim: usize, seed: u64) -> Dataset {
        let mut rng = seed::rng(seed);
        let pts = (0..n * dim).map(|_| rng.gen::<f64>()).collect();
        Dataset::new("random", dim, pts, None).unwrap()
    }

    fn meta() -> SimilarityMeta {
        SimilarityMeta {
            variant: SimilarityVariant::Knn,
            p: PowerParam::Finite(2.0),
            k: None,
            r: None,
        }
    }

    #[test]
    fn kernel_at_scale_is_inverse_e() {
        assert!((kernel(0.7, 0.7, 0.7) - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(kernel(0.0, 1.0, 1.0), 1.0);
        assert!(kernel(1e6, 1.0, 1.0) > 0.0);
        assert!(kernel(1.0, 1.0, 1.0) > kernel(1.1, 1.0, 1.0));
    }

    #[test]
    fn max_symmetrization() {
        let s = SparseSimilarity::from_directed(3, [(0, 1, 0.4), (1, 0, 0.6), (2, 1, 0.3)], meta())
            .unwrap();
        assert_eq!(s.get(0, 1), 0.6);
        assert_eq!(s.get(1, 0), 0.6);
        assert_eq!(s.get(1, 2), 0.3);
        assert_eq!(s.get(2, 1), 0.3);
        assert_eq!(s.get(0, 2), 0.0);
        assert_eq!(s.nnz(), 4);
        let mut out = Vec::new();
        s.write_triplets(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "0 1 0.6\n1 0 0.6\n1 2 0.3\n2 1 0.3\n");
    }

    #[test]
    fn two_point_full_matrix() {
        let d = Dataset::new("two", 2, vec![0.0, 0.0, 3.0, 4.0], None).unwrap();
        let a = build_full_similarity(&d, 1).unwrap();
        assert_eq!(a.get(0, 0), 0.0);
        assert!((a.get(0, 1) - (-1f64).exp()).abs() < 1e-15);
        assert_eq!(a.get(0, 1), a.get(1, 0));
    }

    #[test]
    fn full_matrix_is_exactly_symmetric() {
        let d = random_dataset(60, 3, 1);
        let a = build_full_similarity(&d, 10).unwrap();
        for i in 0..60 {
            for j in 0..60 {
                assert_eq!(a.get(i, j), a.get(j, i));
            }
        }
        assert!(build_full_similarity_with_cap(&d, 10, 59).is_err());
        assert!(build_full_similarity(&d, 60).is_err());
    }

    #[test]
    fn parameter_checks() {
        let d = random_dataset(20, 2, 2);
        let index = SpatialIndex::build(&d);
        assert!(build_knn_similarity(&index, 5, 6, PowerParam::Finite(2.0)).is_err());
        assert!(build_knn_similarity(&index, 20, 5, PowerParam::Finite(2.0)).is_err());
        assert!(build_knn_similarity(&index, 5, 0, PowerParam::Finite(2.0)).is_err());
        // r = k reaches one past the neighbor set.
        assert!(build_knn_similarity(&index, 5, 5, PowerParam::Finite(2.0)).is_ok());
    }

    #[test]
    fn duplicates_get_full_weight() {
        let mut pts = random_dataset(30, 2, 3).points().to_vec();
        for _ in 0..4 {
            pts.extend_from_slice(&[0.5, 0.5]);
        }
        let d = Dataset::new("dups", 2, pts, None).unwrap();
        let index = SpatialIndex::build(&d);
        let a = build_knn_similarity(&index, 5, 2, PowerParam::Infinity).unwrap();
        assert_eq!(a.get(30, 31), 1.0);
        assert!(a.triplets().all(|(_, _, w)| w > 0.0 && w <= 1.0 && w.is_finite()));
    }

    #[test]
    fn euclidean_knn_similarity_matches_direct_construction() {
        let d = random_dataset(150, 4, 9);
        let index = SpatialIndex::build(&d);
        let (k, r) = (8, 5);
        let a = build_knn_similarity(&index, k, r, PowerParam::EUCLIDEAN).unwrap();
        let lists: Vec<_> = (0..150).map(|i| knn_brute(&d, i, k - 1).unwrap()).collect();
        let sig: Vec<f64> = lists.iter().map(|l| l.neighbors[r - 1].distance).collect();
        let mut want = vec![0.0; 150 * 150];
        for (i, l) in lists.iter().enumerate() {
            for nb in &l.neighbors {
                let d2 = d.distance(i, nb.index).powi(2);
                let w = (-d2 / (sig[i] * sig[nb.index])).exp();
                let j = nb.index;
                want[i * 150 + j] = f64::max(want[i * 150 + j], w);
                want[j * 150 + i] = f64::max(want[j * 150 + i], w);
            }
        }
        for i in 0..150 {
            for j in 0..150 {
                assert!((a.get(i, j) - want[i * 150 + j]).abs() < 1e-14, "({i},{j})");
            }
        }
    }

    #[test]
    fn moons_structure() {
        let d = generate(&SyntheticSpec::new(SyntheticFamily::ThreeMoons, 4)).unwrap();
        let index = SpatialIndex::build(&d);
        let a = build_knn_similarity(&index, 15, 10, PowerParam::Finite(2.0)).unwrap();
        assert!(a.nnz() <= 2 * 1500 * 15);
        assert!(a.triplets().all(|(i, j, w)| i != j && w > 0.0 && w <= 1.0));
    }

    #[test]
    fn unweighted_degrees() {
        let d = random_dataset(200, 3, 12);
        let index = SpatialIndex::build(&d);
        let k = 10;
        let a = build_unweighted_knn(&index, k, PowerParam::Finite(10.0)).unwrap();
        for i in 0..200 {
            assert!(a.degree(i) >= k - 1);
            assert!(a.row(i).all(|(j, w)| w == 1.0 && a.get(j, i) == 1.0));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn knn_similarity_invariants(
            n in 12usize..80,
            dim in 1usize..5,
            seed in any::<u64>(),
            p_idx in 0usize..4,
        ) {
            let p = [PowerParam::EUCLIDEAN, PowerParam::Finite(2.0), PowerParam::Finite(10.0), PowerParam::Infinity][p_idx];
            let d = random_dataset(n, dim, seed);
            let index = SpatialIndex::build(&d);
            let a = build_knn_similarity(&index, 6, 4, p).unwrap();
            prop_assert!(a.nnz() <= 2 * n * 6);
            for (i, j, w) in a.triplets() {
                prop_assert!(i != j);
                prop_assert!(w > 0.0 && w <= 1.0);
                prop_assert_eq!(a.get(j, i), w);
            }
        }
    }
}
