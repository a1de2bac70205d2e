//! Point clouds, the synthetic manifold families and CSV I/O.
//!
//! A [`Dataset`] is `n` points in `R^D`, stored row-major, with optional
//! ground-truth cluster labels in `0..ℓ`. Synthetic families sample each
//! cluster uniformly from a one-dimensional curve in the plane, embed it in
//! the first two coordinates of `R^D` (the remaining coordinates are zero)
//! and then add i.i.d. Gaussian noise to every coordinate.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// `n` points in `R^D` with optional labels. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    dim: usize,
    points: Vec<f64>,
    labels: Option<Vec<usize>>,
}

impl Dataset {
    /// Builds a dataset from row-major coordinates, validating every
    /// invariant (non-empty, finite, labels dense in `0..ℓ`).
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        points: Vec<f64>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDataset("dimension must be at least 1".into()));
        }
        if points.is_empty() {
            return Err(Error::InvalidDataset("dataset has no points".into()));
        }
        if points.len() % dim != 0 {
            return Err(Error::InvalidDataset(format!(
                "{} coordinates is not a multiple of dimension {dim}",
                points.len()
            )));
        }
        if let Some(pos) = points.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "non-finite coordinate in point {}",
                pos / dim
            )));
        }
        let n = points.len() / dim;
        if let Some(labels) = &labels {
            if labels.len() != n {
                return Err(Error::InvalidDataset(format!(
                    "{} labels for {n} points",
                    labels.len()
                )));
            }
            let clusters = labels.iter().max().map_or(0, |&m| m + 1);
            let mut seen = vec![false; clusters];
            for &l in labels {
                seen[l] = true;
            }
            if let Some(empty) = seen.iter().position(|s| !s) {
                return Err(Error::InvalidDataset(format!("cluster {empty} is empty")));
            }
        }
        Ok(Self {
            name: name.into(),
            dim,
            points,
            labels,
        })
    }

    pub fn from_rows(
        name: impl Into<String>,
        rows: &[Vec<f64>],
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::InvalidDataset(format!(
                "row {bad} has {} coordinates, expected {dim}",
                rows[bad].len()
            )));
        }
        Self::new(name, dim, rows.concat(), labels)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Number of points.
    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn num_clusters(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().max().map_or(0, |&m| m + 1))
    }

    /// Euclidean distance between points `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        squared_distance(self.point(i), self.point(j)).sqrt()
    }

    /// Length of the bounding-box diagonal; an upper bound on the diameter.
    pub fn bounding_diagonal(&self) -> f64 {
        let mut lo = self.point(0).to_vec();
        let mut hi = lo.clone();
        for i in 1..self.len() {
            for (d, &x) in self.point(i).iter().enumerate() {
                lo[d] = lo[d].min(x);
                hi[d] = hi[d].max(x);
            }
        }
        squared_distance(&lo, &hi).sqrt()
    }

    /// The points at `indices`, in that order. Labels are carried over and
    /// compacted so that they stay dense.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let n = self.len();
        let mut points = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, n });
            }
            points.extend_from_slice(self.point(i));
        }
        let labels = self.labels.as_ref().map(|labels| {
            let picked: Vec<usize> = indices.iter().map(|&i| labels[i]).collect();
            densify(&picked)
        });
        Dataset::new(format!("{}[subset]", self.name), self.dim, points, labels)
    }
}

/// Squared Euclidean distance. Every distance in the crate goes through
/// this function so that independently computed values agree bitwise.
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn densify(labels: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    for &l in labels {
        map.entry(l).or_insert(0usize);
    }
    for (next, v) in map.values_mut().enumerate() {
        *v = next;
    }
    labels.iter().map(|l| map[l]).collect()
}

/// Synthetic manifold families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticFamily {
    /// Segments `y = 0, 1, 2` with `x ∈ [0, 5]`.
    ThreeLines,
    /// Upper unit semicircle at (0,0), lower semicircle of radius 1.5 at
    /// (1.5, 0.4), upper unit semicircle at (3,0).
    ThreeMoons,
    /// Concentric circles of radii 1, 2.25 and 3.5.
    ThreeCircles,
    /// A single unit circle; used for intra-cluster distance experiments.
    Circle,
}

impl SyntheticFamily {
    pub fn num_clusters(self) -> usize {
        match self {
            Self::Circle => 1,
            _ => 3,
        }
    }

    pub fn default_counts(self) -> Vec<usize> {
        match self {
            Self::ThreeLines | Self::ThreeMoons => vec![500; 3],
            Self::ThreeCircles => vec![222, 500, 778],
            Self::Circle => vec![500],
        }
    }

    /// Maps an arc-length fraction `t ∈ [0,1)` on cluster `cluster` to the plane.
    fn curve_point(self, cluster: usize, t: f64) -> (f64, f64) {
        match self {
            Self::ThreeLines => (5.0 * t, cluster as f64),
            Self::ThreeMoons => {
                let theta = PI * t;
                match cluster {
                    0 => (theta.cos(), theta.sin()),
                    1 => (1.5 + 1.5 * theta.cos(), 0.4 - 1.5 * theta.sin()),
                    _ => (3.0 + theta.cos(), theta.sin()),
                }
            }
            Self::ThreeCircles => {
                let r = [1.0, 2.25, 3.5][cluster];
                let theta = 2.0 * PI * t;
                (r * theta.cos(), r * theta.sin())
            }
            Self::Circle => {
                let theta = 2.0 * PI * t;
                (theta.cos(), theta.sin())
            }
        }
    }
}

impl fmt::Display for SyntheticFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ThreeLines => "three-lines",
            Self::ThreeMoons => "three-moons",
            Self::ThreeCircles => "three-circles",
            Self::Circle => "circle",
        })
    }
}

impl FromStr for SyntheticFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "three-lines" | "lines" => Ok(Self::ThreeLines),
            "three-moons" | "moons" => Ok(Self::ThreeMoons),
            "three-circles" | "circles" => Ok(Self::ThreeCircles),
            "circle" => Ok(Self::Circle),
            other => Err(Error::InvalidParameter(format!(
                "unknown dataset family `{other}`"
            ))),
        }
    }
}

/// Parameters of a synthetic draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub family: SyntheticFamily,
    pub points_per_cluster: Vec<usize>,
    pub ambient_dim: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Default experiment settings: 1500 points, `D = 50`, `σ = 0.14`.
    pub fn new(family: SyntheticFamily, seed: u64) -> Self {
        Self {
            family,
            points_per_cluster: family.default_counts(),
            ambient_dim: 50,
            noise_sigma: 0.14,
            seed,
        }
    }

    pub fn with_counts(mut self, counts: Vec<usize>) -> Self {
        self.points_per_cluster = counts;
        self
    }

    /// Same number of points on every cluster.
    pub fn with_points_per_cluster(mut self, n: usize) -> Self {
        self.points_per_cluster = vec![n; self.family.num_clusters()];
        self
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.ambient_dim = dim;
        self
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn total_points(&self) -> usize {
        self.points_per_cluster.iter().sum()
    }

    fn validate(&self) -> Result<()> {
        if self.ambient_dim < 2 {
            return Err(Error::InvalidParameter(format!(
                "ambient dimension must be at least 2, got {}",
                self.ambient_dim
            )));
        }
        if self.points_per_cluster.len() != self.family.num_clusters() {
            return Err(Error::InvalidParameter(format!(
                "{} expects {} cluster counts, got {}",
                self.family,
                self.family.num_clusters(),
                self.points_per_cluster.len()
            )));
        }
        if self.points_per_cluster.contains(&0) {
            return Err(Error::InvalidParameter(
                "every cluster needs at least one point".into(),
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise sigma must be finite and non-negative, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// Draws a labeled dataset. Deterministic in `spec.seed`.
pub fn generate(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let dim = spec.ambient_dim;
    let n = spec.total_points();
    let mut rng = seed::rng(spec.seed);
    let mut points = vec![0.0; n * dim];
    let mut labels = Vec::with_capacity(n);

    // Curve positions first, then noise, so the clean geometry is
    // independent of sigma for a fixed seed.
    let mut row = 0;
    for (cluster, &count) in spec.points_per_cluster.iter().enumerate() {
        for _ in 0..count {
            let t: f64 = rng.gen();
            let (x, y) = spec.family.curve_point(cluster, t);
            points[row * dim] = x;
            points[row * dim + 1] = y;
            labels.push(cluster);
            row += 1;
        }
    }
    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        for x in &mut points {
            *x += normal.sample(&mut rng);
        }
    }

    let name = format!("{}-D{}-s{}-seed{}", spec.family, dim, spec.noise_sigma, spec.seed);
    Dataset::new(name, dim, points, Some(labels))
}

/// Which CSV column holds the labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelColumn {
    Index(usize),
    Last,
}

impl FromStr for LabelColumn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("last") {
            return Ok(Self::Last);
        }
        s.parse()
            .map(Self::Index)
            .map_err(|_| Error::InvalidParameter(format!("bad label column `{s}`")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CsvOptions {
    pub label_column: Option<LabelColumn>,
    pub has_header: bool,
}

/// Reads a comma-separated file of numeric rows.
///
/// Label values may be arbitrary strings; they are remapped to `0..ℓ` in
/// sorted order (numeric order when every label parses as a number).
pub fn load_csv(path: impl AsRef<Path>, options: &CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path)?;
    let name = path
        .file_stem()
        .map_or_else(|| "dataset".to_string(), |s| s.to_string_lossy().into_owned());
    read_csv(file, path, &name, options)
}

/// [`load_csv`] over any reader; `origin` is used in error messages.
pub fn read_csv<R: Read>(
    reader: R,
    origin: &Path,
    name: &str,
    options: &CsvOptions,
) -> Result<Dataset> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: PathBuf::from(origin),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut points = Vec::new();
    let mut raw_labels = Vec::new();
    let mut width: Option<usize> = None;
    for (row, record) in rdr.records().enumerate() {
        let line = row + 1;
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        if options.has_header && row == 0 {
            continue;
        }
        if record.iter().all(str::is_empty) {
            continue;
        }
        let fields = record.len();
        match width {
            None => width = Some(fields),
            Some(w) if w != fields => {
                return Err(parse_err(line, format!("expected {w} fields, found {fields}")));
            }
            Some(_) => {}
        }
        let label_at = match options.label_column {
            None => None,
            Some(LabelColumn::Last) => Some(fields - 1),
            Some(LabelColumn::Index(i)) if i < fields => Some(i),
            Some(LabelColumn::Index(i)) => {
                return Err(parse_err(line, format!("label column {i} out of range")));
            }
        };
        for (col, field) in record.iter().enumerate() {
            if Some(col) == label_at {
                raw_labels.push(field.to_string());
                continue;
            }
            let value: f64 = field.parse().map_err(|_| {
                parse_err(line, format!("column {col}: `{field}` is not a number"))
            })?;
            if !value.is_finite() {
                return Err(parse_err(line, format!("column {col}: non-finite value")));
            }
            points.push(value);
        }
    }
    let width = width.ok_or_else(|| parse_err(1, "file contains no data rows".into()))?;
    let dim = width - usize::from(options.label_column.is_some());
    if dim == 0 {
        return Err(parse_err(1, "no coordinate columns".into()));
    }
    let labels = options
        .label_column
        .map(|_| remap_labels(&raw_labels));
    Dataset::new(name, dim, points, labels)
}

fn remap_labels(raw: &[String]) -> Vec<usize> {
    let mut distinct: Vec<&String> = raw.iter().collect();
    distinct.sort();
    distinct.dedup();
    let numeric: Option<Vec<f64>> = distinct.iter().map(|s| s.parse().ok()).collect();
    if let Some(values) = numeric {
        let mut order: Vec<usize> = (0..distinct.len()).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        distinct = order.into_iter().map(|i| distinct[i]).collect();
    }
    raw.iter()
        .map(|s| distinct.iter().position(|d| *d == s).unwrap_or(0))
        .collect()
}

/// Writes one row per point: coordinates, then the label if present.
/// Floats use shortest round-trip formatting.
pub fn save_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_csv(data, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn write_csv<W: Write>(data: &Dataset, out: &mut W) -> Result<()> {
    for i in 0..data.len() {
        let mut line = data
            .point(i)
            .iter()
            .map(f64::to_string)
            .collect::<Vec<_>>()
            .join(",");
        if let Some(labels) = data.labels() {
            line.push(',');
            line.push_str(&labels[i].to_string());
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Sidecar JSON describing where a dataset came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub name: String,
    pub n: usize,
    pub dim: usize,
    pub clusters: Option<usize>,
    pub cluster_sizes: Option<Vec<usize>>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Provenance {
    Synthetic(SyntheticSpec),
    File { path: String },
}

impl DatasetDescriptor {
    pub fn new(data: &Dataset, provenance: Provenance) -> Self {
        let cluster_sizes = data.labels().map(|labels| {
            let mut sizes = vec![0; data.num_clusters().unwrap_or(0)];
            for &l in labels {
                sizes[l] += 1;
            }
            sizes
        });
        Self {
            name: data.name().to_string(),
            n: data.len(),
            dim: data.dim(),
            clusters: data.num_clusters(),
            cluster_sizes,
            provenance,
        }
    }
}
