//! Power-weighted path lengths and exact all-pairs shortest-path oracles.
//!
//! For a path visiting points `x_0, …, x_m` the `p`-weighted length is
//! `(Σ ‖x_{j+1} − x_j‖^p)^{1/p}` and the longest-leg length is
//! `max ‖x_{j+1} − x_j‖`. The metric between two points is the minimum
//! over all paths through the dataset. [`pairwise_exact`] computes it by
//! Floyd–Warshall on the complete graph and is the ground truth the fast
//! neighbor search is tested against.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Default cap on `n` for the O(n³) oracle.
pub const DEFAULT_ORACLE_CAP: usize = 2000;

/// Environment variable overriding [`DEFAULT_ORACLE_CAP`].
pub const ORACLE_CAP_ENV: &str = "PWSPM_ORACLE_CAP";

pub fn oracle_cap() -> usize {
    std::env::var(ORACLE_CAP_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(DEFAULT_ORACLE_CAP)
}

/// The exponent `p ∈ [1, ∞]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PowerParam {
    Finite(f64),
    Infinity,
}

impl PowerParam {
    pub const EUCLIDEAN: Self = Self::Finite(1.0);

    pub fn finite(p: f64) -> Result<Self> {
        if p.is_finite() && p >= 1.0 {
            Ok(Self::Finite(p))
        } else if p == f64::INFINITY {
            Ok(Self::Infinity)
        } else {
            Err(Error::InvalidParameter(format!("power must be >= 1, got {p}")))
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Self::Infinity)
    }

    pub fn is_euclidean(self) -> bool {
        self == Self::EUCLIDEAN
    }

    /// `p` as a float, `f64::INFINITY` for the longest-leg case.
    pub fn value(self) -> f64 {
        match self {
            Self::Finite(p) => p,
            Self::Infinity => f64::INFINITY,
        }
    }
}

impl fmt::Display for PowerParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Finite(p) => write!(f, "{p}"),
            Self::Infinity => f.write_str("inf"),
        }
    }
}

impl FromStr for PowerParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "∞" => Ok(Self::Infinity),
            _ => s
                .parse::<f64>()
                .map_err(|_| Error::InvalidParameter(format!("bad power `{s}`")))
                .and_then(Self::finite),
        }
    }
}

impl TryFrom<String> for PowerParam {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<PowerParam> for String {
    fn from(p: PowerParam) -> String {
        p.to_string()
    }
}

/// A sequence of at least two point indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Path(Vec<usize>);

impl Path {
    pub fn new(points: Vec<usize>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "a path needs at least two points, got {}",
                points.len()
            )));
        }
        Ok(Self(points))
    }

    pub fn points(&self) -> &[usize] {
        &self.0
    }

    /// Number of legs.
    pub fn legs(&self) -> usize {
        self.0.len() - 1
    }
}

/// Combines leg lengths under `p`. Finite powers are evaluated relative to
/// the longest leg so that large `p` cannot overflow.
pub fn combine_legs(legs: &[f64], p: PowerParam) -> f64 {
    let longest = legs.iter().copied().fold(0.0, f64::max);
    match p {
        PowerParam::Infinity => longest,
        PowerParam::Finite(p) if p == 1.0 => legs.iter().sum(),
        PowerParam::Finite(p) => {
            if longest == 0.0 {
                return 0.0;
            }
            let sum: f64 = legs.iter().map(|&l| (l / longest).powf(p)).sum();
            longest * sum.powf(1.0 / p)
        }
    }
}

/// Length of `path` under `p`.
pub fn path_length(data: &Dataset, path: &Path, p: PowerParam) -> Result<f64> {
    let n = data.len();
    if let Some(&bad) = path.points().iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange { index: bad, n });
    }
    let legs: Vec<f64> = path
        .points()
        .windows(2)
        .map(|w| data.distance(w[0], w[1]))
        .collect();
    Ok(combine_legs(&legs, p))
}

/// Dense symmetric `n × n` distances under a stated power.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    power: PowerParam,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn power(&self) -> PowerParam {
        self.power
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Largest entrywise `|self − other|`.
    pub fn max_abs_diff(&self, other: &DistanceMatrix) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Indices of the `k` nearest points to `source` (source first, then
    /// ascending distance, ties by index), paired with their distances.
    pub fn nearest(&self, source: usize, k: usize) -> Vec<(usize, f64)> {
        let row = self.row(source);
        let mut order: Vec<usize> = (0..self.n).filter(|&j| j != source).collect();
        order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
        std::iter::once((source, 0.0))
            .chain(order.into_iter().map(|j| (j, row[j])))
            .take(k)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        for i in 0..self.n {
            let line = self
                .row(i)
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(",");
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Plain pairwise Euclidean distances.
pub fn euclidean_matrix(data: &Dataset) -> DistanceMatrix {
    let n = data.len();
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = data.distance(i, j);
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
    }
    DistanceMatrix {
        n,
        power: PowerParam::EUCLIDEAN,
        values,
    }
}

/// Exact `d^(p)` between every pair of points, using the default cap.
pub fn pairwise_exact(data: &Dataset, p: PowerParam) -> Result<DistanceMatrix> {
    pairwise_exact_with_cap(data, p, oracle_cap())
}

/// Exact `d^(p)` by Floyd–Warshall (finite `p`, in the `p`-th power domain)
/// or the minimax recurrence (`p = ∞`). O(n³).
pub fn pairwise_exact_with_cap(
    data: &Dataset,
    p: PowerParam,
    cap: usize,
) -> Result<DistanceMatrix> {
    let n = data.len();
    if n > cap {
        return Err(Error::CapExceeded {
            what: "exact path-distance oracle",
            n,
            cap,
            hint: "use path_knn for large datasets",
        });
    }
    let mut m = euclidean_matrix(data);
    m.power = p;
    match p {
        PowerParam::Infinity => {
            relax_all(&mut m.values, n, |ik, kj| ik.max(kj));
        }
        PowerParam::Finite(p) if p == 1.0 => {
            relax_all(&mut m.values, n, |ik, kj| ik + kj);
        }
        PowerParam::Finite(p) => {
            let scale = m.values.iter().copied().fold(0.0, f64::max);
            let smallest = m.values.iter().copied().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
            if scale == 0.0 {
                return Ok(m);
            }
            if p * (scale / smallest).log10() <= POWER_DOMAIN_DECADES {
                for v in &mut m.values {
                    *v = (*v / scale).powf(p);
                }
                relax_all(&mut m.values, n, |ik, kj| ik + kj);
                for v in &mut m.values {
                    *v = scale * v.powf(1.0 / p);
                }
            } else {
                // Powers would underflow; combine lengths as p-norms instead.
                relax_all_pruned(&mut m.values, n, |ik, kj| norm_pair(ik, kj, p));
            }
        }
    }
    Ok(m)
}

/// Dynamic range, in decades, that `p`-th powers may span before the
/// smallest ones lose precision.
const POWER_DOMAIN_DECADES: f64 = 280.0;

/// `(a^p + b^p)^{1/p}` for `a, b >= 0` without forming the powers.
pub(crate) fn norm_pair(a: f64, b: f64, p: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == 0.0 {
        return hi;
    }
    hi * ((lo / hi).powf(p).ln_1p() / p).exp()
}

/// Floyd–Warshall with a generic path combiner. The combiner must be
/// monotone with `combine(a, b) >= max(a, b)`.
fn relax_all(d: &mut [f64], n: usize, combine: impl Fn(f64, f64) -> f64) {
    let mut row_k = vec![0.0; n];
    for k in 0..n {
        row_k.copy_from_slice(&d[k * n..(k + 1) * n]);
        for i in 0..n {
            let ik = d[i * n + k];
            for (ij, &kj) in d[i * n..(i + 1) * n].iter_mut().zip(&row_k) {
                let through = combine(ik, kj);
                *ij = if through < *ij { through } else { *ij };
            }
        }
    }
}

/// As [`relax_all`] for an expensive combiner, evaluated only when both
/// legs are shorter than the current distance.
fn relax_all_pruned(d: &mut [f64], n: usize, combine: impl Fn(f64, f64) -> f64) {
    let mut row_k = vec![0.0; n];
    for k in 0..n {
        row_k.copy_from_slice(&d[k * n..(k + 1) * n]);
        for i in 0..n {
            let ik = d[i * n + k];
            for (ij, &kj) in d[i * n..(i + 1) * n].iter_mut().zip(&row_k) {
                if ik < *ij && kj < *ij {
                    *ij = ij.min(combine(ik, kj));
                }
            }
        }
    }
}

/// Largest intra-cluster and smallest inter-cluster path distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationStats {
    /// `ε₁`: max over clusters of the max distance between two members.
    pub eps1: f64,
    /// `ε₂`: min distance between members of different clusters; `None`
    /// when there is a single cluster.
    pub eps2: Option<f64>,
}

/// `ε₁` and `ε₂` under `p`, with paths free to pass through any cluster.
pub fn intra_inter_stats(data: &Dataset, p: PowerParam) -> Result<SeparationStats> {
    let labels = data
        .labels()
        .ok_or_else(|| Error::MissingLabels(data.name().to_string()))?;
    let m = pairwise_exact(data, p)?;
    Ok(separation_from_matrix(&m, labels))
}

pub fn separation_from_matrix(m: &DistanceMatrix, labels: &[usize]) -> SeparationStats {
    let mut eps1: f64 = 0.0;
    let mut eps2: Option<f64> = None;
    for i in 0..m.n() {
        let row = m.row(i);
        for j in i + 1..m.n() {
            if labels[i] == labels[j] {
                eps1 = eps1.max(row[j]);
            } else {
                eps2 = Some(eps2.map_or(row[j], |e| e.min(row[j])));
            }
        }
    }
    SeparationStats { eps1, eps2 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn line(xs: &[f64]) -> Dataset {
        Dataset::new("line", 1, xs.to_vec(), None).unwrap()
    }

    #[test]
    fn power_param_parsing() {
        assert_eq!("inf".parse::<PowerParam>().unwrap(), PowerParam::Infinity);
        assert_eq!("2".parse::<PowerParam>().unwrap(), PowerParam::Finite(2.0));
        assert!("0.5".parse::<PowerParam>().is_err());
        assert!("abc".parse::<PowerParam>().is_err());
        assert!(PowerParam::finite(f64::NAN).is_err());
        let json = serde_json::to_string(&PowerParam::Infinity).unwrap();
        assert_eq!(json, "\"inf\"");
        assert_eq!(serde_json::from_str::<PowerParam>("\"10\"").unwrap(), PowerParam::Finite(10.0));
    }

    #[test]
    fn three_four_legs() {
        let d = Dataset::new("legs", 2, vec![0.0, 0.0, 3.0, 0.0, 3.0, 4.0], None).unwrap();
        let path = Path::new(vec![0, 1, 2]).unwrap();
        assert_relative_eq!(path_length(&d, &path, PowerParam::Finite(2.0)).unwrap(), 5.0);
        assert_eq!(path_length(&d, &path, PowerParam::Infinity).unwrap(), 4.0);
        assert_eq!(path_length(&d, &path, PowerParam::EUCLIDEAN).unwrap(), 7.0);
    }

    #[test]
    fn short_paths_are_rejected() {
        assert!(Path::new(vec![3]).is_err());
        let d = line(&[0.0, 1.0]);
        let path = Path::new(vec![0, 5]).unwrap();
        assert!(matches!(
            path_length(&d, &path, PowerParam::EUCLIDEAN),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn large_power_does_not_overflow() {
        let legs = [1e10, 1e10];
        let len = combine_legs(&legs, PowerParam::Finite(100.0));
        assert_relative_eq!(len, 1e10 * 2f64.powf(0.01), max_relative = 1e-14);
    }

    #[test]
    fn chain_beats_direct_leg() {
        let d = line(&[0.0, 1.0, 2.0]);
        let m2 = pairwise_exact(&d, PowerParam::Finite(2.0)).unwrap();
        assert_relative_eq!(m2.get(0, 2), 2f64.sqrt(), max_relative = 1e-15);
        let minf = pairwise_exact(&d, PowerParam::Infinity).unwrap();
        assert_eq!(minf.get(0, 2), 1.0);
        let m1 = pairwise_exact(&d, PowerParam::EUCLIDEAN).unwrap();
        assert_eq!(m1.get(0, 2), 2.0);
    }

    #[test]
    fn cap_is_enforced() {
        let d = line(&[0.0, 1.0, 2.0]);
        assert!(matches!(
            pairwise_exact_with_cap(&d, PowerParam::Infinity, 2),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn two_clusters_on_a_line() {
        let d = Dataset::new("two", 1, vec![0.0, 0.1, 5.0, 5.1], Some(vec![0, 0, 1, 1])).unwrap();
        let stats = intra_inter_stats(&d, PowerParam::Finite(2.0)).unwrap();
        assert_relative_eq!(stats.eps2.unwrap(), 4.9, max_relative = 1e-12);
        assert_relative_eq!(stats.eps1, 0.1, max_relative = 1e-12);
    }

    #[test]
    fn single_cluster_has_no_eps2() {
        let d = Dataset::new("one", 1, vec![0.0, 1.0], Some(vec![0, 0])).unwrap();
        let stats = intra_inter_stats(&d, PowerParam::Infinity).unwrap();
        assert_eq!(stats.eps2, None);
        assert_eq!(stats.eps1, 1.0);
        let unlabeled = line(&[0.0, 1.0]);
        assert!(matches!(
            intra_inter_stats(&unlabeled, PowerParam::Infinity),
            Err(Error::MissingLabels(_))
        ));
    }

    #[test]
    fn nearest_from_matrix() {
        let d = line(&[0.0, 1.0, 2.0, 10.0]);
        let m = pairwise_exact(&d, PowerParam::Infinity).unwrap();
        assert_eq!(m.nearest(0, 3), vec![(0, 0.0), (1, 1.0), (2, 1.0)]);
    }

    #[test]
    fn matrix_csv_export() {
        let d = line(&[0.0, 2.0]);
        let m = euclidean_matrix(&d);
        let mut out = Vec::new();
        m.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "0,2\n2,0\n");
    }
}
