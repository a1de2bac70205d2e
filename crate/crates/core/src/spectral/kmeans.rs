//! k-means with k-means++ seeding and Lloyd iterations, best of several
//! restarts by within-cluster sum of squares (WCSS).
//!
//! Ties in the assignment step go to the lowest center index. A center
//! that loses all its points stays where it was, so WCSS never increases.
//! With fewer distinct points than clusters some clusters stay empty; in
//! the all-identical case every point lands in cluster 0.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::squared_distance;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub clusters: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(clusters: usize, seed: u64) -> Self {
        Self {
            clusters,
            restarts: 10,
            max_iter: 300,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub labels: Vec<usize>,
    /// Row-major `clusters × dim`.
    pub centers: Vec<f64>,
    pub wcss: f64,
    pub iterations: usize,
    /// WCSS after each assignment step of the winning run.
    pub history: Vec<f64>,
}

/// Clusters the rows of a row-major `n × dim` matrix.
pub fn kmeans(rows: &[f64], dim: usize, config: &KMeansConfig) -> Result<KMeansResult> {
    if dim == 0 || rows.len() % dim != 0 {
        return Err(Error::InvalidParameter(format!(
            "{} values do not form rows of width {dim}",
            rows.len()
        )));
    }
    let n = rows.len() / dim;
    if config.clusters == 0 || config.clusters > n {
        return Err(Error::InvalidParameter(format!(
            "cannot form {} clusters from {n} points",
            config.clusters
        )));
    }
    if config.restarts == 0 {
        return Err(Error::InvalidParameter("restarts must be at least 1".into()));
    }
    if rows.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("non-finite k-means input".into()));
    }
    let mut rng = seed::rng(config.seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..config.restarts {
        let centers = plus_plus(rows, dim, config.clusters, &mut rng);
        let run = lloyd(rows, dim, centers, config.max_iter);
        if best.as_ref().map_or(true, |b| run.wcss < b.wcss) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn plus_plus(rows: &[f64], dim: usize, clusters: usize, rng: &mut seed::Rng) -> Vec<f64> {
    let n = rows.len() / dim;
    let row = |i: usize| &rows[i * dim..(i + 1) * dim];
    let mut centers = Vec::with_capacity(clusters * dim);
    centers.extend_from_slice(row(rng.gen_range(0..n)));
    let mut nearest: Vec<f64> = (0..n).map(|i| squared_distance(row(i), &centers[..dim])).collect();
    for c in 1..clusters {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centers.extend_from_slice(row(pick));
        let new = &centers[c * dim..(c + 1) * dim];
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(squared_distance(row(i), new));
        }
    }
    centers
}

fn assign(rows: &[f64], dim: usize, centers: &[f64], labels: &mut [usize]) -> f64 {
    let mut wcss = 0.0;
    for (i, label) in labels.iter_mut().enumerate() {
        let x = &rows[i * dim..(i + 1) * dim];
        let (best, dist) = centers
            .chunks(dim)
            .map(|c| squared_distance(x, c))
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (c, d)| if d < acc.1 { (c, d) } else { acc });
        *label = best;
        wcss += dist;
    }
    wcss
}

/// Sum of squared distances from each row to its labeled center.
pub fn wcss(rows: &[f64], dim: usize, centers: &[f64], labels: &[usize]) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| squared_distance(&rows[i * dim..(i + 1) * dim], &centers[l * dim..(l + 1) * dim]))
        .sum()
}

fn lloyd(rows: &[f64], dim: usize, mut centers: Vec<f64>, max_iter: usize) -> KMeansResult {
    let n = rows.len() / dim;
    let clusters = centers.len() / dim;
    let mut labels = vec![usize::MAX; n];
    let mut next = vec![0; n];
    let mut current = assign(rows, dim, &centers, &mut next);
    let mut history = vec![current];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        if next == labels {
            break;
        }
        labels.copy_from_slice(&next);

        let mut sums = vec![0.0; clusters * dim];
        let mut counts = vec![0usize; clusters];
        for (i, &l) in labels.iter().enumerate() {
            counts[l] += 1;
            for (s, x) in sums[l * dim..(l + 1) * dim].iter_mut().zip(&rows[i * dim..(i + 1) * dim]) {
                *s += x;
            }
        }
        for c in 0..clusters {
            if counts[c] > 0 {
                for d in 0..dim {
                    centers[c * dim + d] = sums[c * dim + d] / counts[c] as f64;
                }
            }
        }
        let updated = wcss(rows, dim, &centers, &labels);
        debug_assert!(updated <= current * (1.0 + 1e-12) + 1e-12, "update raised WCSS");
        let reassigned = assign(rows, dim, &centers, &mut next);
        debug_assert!(reassigned <= updated * (1.0 + 1e-12) + 1e-12, "assignment raised WCSS");
        current = reassigned;
        history.push(current);
    }
    if labels != next {
        labels.copy_from_slice(&next);
    }
    KMeansResult {
        wcss: wcss(rows, dim, &centers, &labels),
        labels,
        centers,
        iterations,
        history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_separated_pairs() {
        let rows = [0.0, 0.0, 0.0, 1.0, 10.0, 0.0, 10.0, 1.0];
        let r = kmeans(&rows, 2, &KMeansConfig::new(2, 3)).unwrap();
        assert_eq!(r.labels[0], r.labels[1]);
        assert_eq!(r.labels[2], r.labels[3]);
        assert_ne!(r.labels[0], r.labels[2]);
        // Each pair is 1 apart: 2 · (0.5² + 0.5²) = 1.
        assert!((r.wcss - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identical_points_terminate() {
        let rows = vec![2.5; 20];
        let r = kmeans(&rows, 2, &KMeansConfig::new(2, 0)).unwrap();
        assert!(r.labels.iter().all(|&l| l == 0));
        assert_eq!(r.wcss, 0.0);
    }

    #[test]
    fn rejects_too_many_clusters() {
        assert!(kmeans(&[1.0, 2.0], 1, &KMeansConfig::new(3, 0)).is_err());
        assert!(kmeans(&[1.0, 2.0, 3.0], 2, &KMeansConfig::new(1, 0)).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let mut rng = seed::rng(5);
        let rows: Vec<f64> = (0..300).map(|_| rng.gen()).collect();
        let a = kmeans(&rows, 3, &KMeansConfig::new(4, 9)).unwrap();
        let b = kmeans(&rows, 3, &KMeansConfig::new(4, 9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn beats_random_assignments() {
        let mut rng = seed::rng(1);
        let rows: Vec<f64> = (0..300).map(|_| rng.gen()).collect();
        let r = kmeans(&rows, 3, &KMeansConfig::new(4, 2)).unwrap();
        for _ in 0..50 {
            let labels: Vec<usize> = (0..100).map(|_| rng.gen_range(0..4)).collect();
            let mut centers = vec![0.0; 12];
            let mut counts = [0usize; 4];
            for (i, &l) in labels.iter().enumerate() {
                counts[l] += 1;
                for d in 0..3 {
                    centers[l * 3 + d] += rows[i * 3 + d];
                }
            }
            for c in 0..4 {
                for d in 0..3 {
                    centers[c * 3 + d] /= counts[c].max(1) as f64;
                }
            }
            assert!(r.wcss <= wcss(&rows, 3, &centers, &labels));
        }
    }
}
