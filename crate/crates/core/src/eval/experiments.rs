//! Repeated-trial experiments: accuracy tables, the accuracy-versus-`p`
//! sweep and the intra/inter-cluster distance statistics.

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean, run_pipeline, std_dev, PipelineConfig, Quartiles};
use crate::dataset::{generate, Dataset, SyntheticFamily, SyntheticSpec};
use crate::error::{Error, Result};
use crate::euclidean_index::SpatialIndex;
use crate::path_metrics::{pairwise_exact, separation_from_matrix, PowerParam};
use crate::seed::derive;
use crate::similarity::{self, SimilarityVariant};
use crate::spectral::{EigenSolver, StageTimings};

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// Fresh draw per trial, reseeded from the experiment seed.
    Synthetic(SyntheticSpec),
    /// The same points every trial; only pipeline seeds change.
    Fixed(Dataset),
}

impl DataSource {
    fn num_clusters(&self) -> Result<usize> {
        match self {
            Self::Synthetic(spec) => Ok(spec.points_per_cluster.len()),
            Self::Fixed(data) => data
                .num_clusters()
                .ok_or_else(|| Error::MissingLabels(data.name().to_string())),
        }
    }

    fn name(&self) -> String {
        match self {
            Self::Synthetic(spec) => spec.family.to_string(),
            Self::Fixed(data) => data.name().to_string(),
        }
    }

    fn trial_data(&self, seed: u64) -> Result<std::borrow::Cow<'_, Dataset>> {
        match self {
            Self::Synthetic(spec) => Ok(std::borrow::Cow::Owned(generate(&spec.clone().with_seed(seed))?)),
            Self::Fixed(data) => Ok(std::borrow::Cow::Borrowed(data)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableSpec {
    pub source: DataSource,
    pub p_values: Vec<PowerParam>,
    pub variants: Vec<SimilarityVariant>,
    pub trials: usize,
    pub k: usize,
    pub r: usize,
    pub seed: u64,
    pub eigsolver: EigenSolver,
    pub kmeans_restarts: usize,
}

impl TableSpec {
    pub fn new(source: DataSource, p_values: Vec<PowerParam>, trials: usize, seed: u64) -> Self {
        Self {
            source,
            p_values,
            variants: vec![SimilarityVariant::Knn],
            trials,
            k: similarity::DEFAULT_K,
            r: similarity::DEFAULT_R,
            seed,
            eigsolver: EigenSolver::Auto,
            kmeans_restarts: 10,
        }
    }

    /// The (variant, p) cells of the table, skipping combinations the
    /// full Euclidean matrix cannot represent.
    pub fn cells(&self) -> Vec<(SimilarityVariant, PowerParam)> {
        let mut cells = Vec::new();
        for &v in &self.variants {
            if v == SimilarityVariant::Full {
                cells.push((v, PowerParam::EUCLIDEAN));
                continue;
            }
            for &p in &self.p_values {
                cells.push((v, p));
            }
        }
        cells
    }

    fn pipeline(&self, variant: SimilarityVariant, p: PowerParam, clusters: usize, seed: u64) -> PipelineConfig {
        let mut config = PipelineConfig::new(variant, p, clusters, seed);
        config.k = self.k;
        config.r = self.r;
        config.spectral.eigsolver = self.eigsolver;
        config.spectral.kmeans_restarts = self.kmeans_restarts;
        config
    }
}

/// Aggregated accuracies of one (variant, p) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReport {
    pub dataset: String,
    pub p: PowerParam,
    pub variant: SimilarityVariant,
    pub trials: usize,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    /// Per-stage mean wall-clock seconds.
    pub timings: StageTimings,
    /// Data seed of each trial (unused for fixed data) and pipeline seed.
    pub data_seeds: Vec<u64>,
    pub pipeline_seeds: Vec<u64>,
}

fn trial_seeds(seed: u64, trial: usize) -> (u64, u64) {
    let base = derive(seed, trial as u64);
    (derive(base, 0), derive(base, 1))
}

/// Runs every (variant, p) cell for `spec.trials` trials. Within a trial
/// all cells see the same data and share one Euclidean neighbor table.
pub fn run_table_experiment(spec: &TableSpec) -> Result<Vec<TrialReport>> {
    if spec.trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let clusters = spec.source.num_clusters()?;
    let cells = spec.cells();
    let need = cells
        .iter()
        .map(|&(v, p)| spec.pipeline(v, p, clusters, 0).table_size())
        .max()
        .unwrap_or(0);

    let per_trial: Vec<Vec<(f64, StageTimings)>> = (0..spec.trials)
        .into_par_iter()
        .map(|t| {
            let (data_seed, pipe_seed) = trial_seeds(spec.seed, t);
            let data = spec.source.trial_data(data_seed)?;
            let table = if need > 0 {
                Some(SpatialIndex::build(&data).knn_table(need)?)
            } else {
                None
            };
            cells
                .iter()
                .map(|&(v, p)| {
                    let config = spec.pipeline(v, p, clusters, pipe_seed);
                    let r = run_pipeline(&data, &config, table.as_ref())?;
                    let acc = r.accuracy.ok_or_else(|| Error::MissingLabels(data.name().to_string()))?;
                    Ok((acc, r.timings))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let seeds: Vec<(u64, u64)> = (0..spec.trials).map(|t| trial_seeds(spec.seed, t)).collect();
    let name = spec.source.name();
    Ok(cells
        .iter()
        .enumerate()
        .map(|(c, &(variant, p))| {
            let accuracies: Vec<f64> = per_trial.iter().map(|row| row[c].0).collect();
            let timing = |f: fn(&StageTimings) -> f64| mean(&per_trial.iter().map(|row| f(&row[c].1)).collect::<Vec<_>>());
            TrialReport {
                dataset: name.clone(),
                p,
                variant,
                trials: spec.trials,
                mean: mean(&accuracies),
                std: std_dev(&accuracies),
                accuracies,
                timings: StageTimings {
                    graph_secs: timing(|t| t.graph_secs),
                    eigen_secs: timing(|t| t.eigen_secs),
                    kmeans_secs: timing(|t| t.kmeans_secs),
                },
                data_seeds: match spec.source {
                    DataSource::Synthetic(_) => seeds.iter().map(|s| s.0).collect(),
                    DataSource::Fixed(_) => Vec::new(),
                },
                pipeline_seeds: seeds.iter().map(|s| s.1).collect(),
            }
        })
        .collect())
}

/// Aligned text table: one row per variant, one column per `p`, entries
/// `mean ± std` in percent.
pub fn format_table(reports: &[TrialReport]) -> String {
    let mut columns: Vec<PowerParam> = Vec::new();
    let mut rows: Vec<(String, SimilarityVariant)> = Vec::new();
    for r in reports {
        if !columns.contains(&r.p) {
            columns.push(r.p);
        }
        if !rows.iter().any(|x| x.0 == r.dataset && x.1 == r.variant) {
            rows.push((r.dataset.clone(), r.variant));
        }
    }
    let header: Vec<String> = std::iter::once("dataset / variant".to_string())
        .chain(columns.iter().map(|p| format!("p = {p}")))
        .collect();
    let mut cells: Vec<Vec<String>> = vec![header];
    for (name, variant) in &rows {
        let mut line = vec![format!("{name} / {variant}")];
        for p in &columns {
            let entry = reports
                .iter()
                .find(|r| &r.dataset == name && r.variant == *variant && r.p == *p)
                .map_or_else(|| "-".to_string(), |r| format!("{:.2} ± {:.2}", 100.0 * r.mean, 100.0 * r.std));
            line.push(entry);
        }
        cells.push(line);
    }
    let widths: Vec<usize> = (0..cells[0].len())
        .map(|c| cells.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &cells {
        let padded: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(s, &w)| format!("{s}{}", " ".repeat(w - s.chars().count())))
            .collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub family: SyntheticFamily,
    pub points_per_cluster: usize,
    pub dims: Vec<usize>,
    pub p_values: Vec<PowerParam>,
    pub trials: usize,
    pub k: usize,
    pub r: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl SweepSpec {
    /// Integer powers `1..=p_max` over the given ambient dimensions.
    pub fn new(family: SyntheticFamily, points_per_cluster: usize, dims: Vec<usize>, p_max: usize, trials: usize, seed: u64) -> Self {
        Self {
            family,
            points_per_cluster,
            dims,
            p_values: (1..=p_max).map(|p| PowerParam::Finite(p as f64)).collect(),
            trials,
            k: similarity::DEFAULT_K,
            r: similarity::DEFAULT_R,
            sigma: 0.14,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p: PowerParam,
    pub dim: usize,
    pub mean_acc: f64,
    pub std: f64,
}

/// Mean accuracy of the weighted k-NN pipeline for every `(D, p)`.
pub fn run_p_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for (d_index, &dim) in spec.dims.iter().enumerate() {
        let source = DataSource::Synthetic(
            SyntheticSpec::new(spec.family, 0)
                .with_points_per_cluster(spec.points_per_cluster)
                .with_dim(dim)
                .with_sigma(spec.sigma),
        );
        let mut table = TableSpec::new(source, spec.p_values.clone(), spec.trials, derive(spec.seed, d_index as u64));
        table.k = spec.k;
        table.r = spec.r;
        for report in run_table_experiment(&table)? {
            rows.push(SweepRow {
                p: report.p,
                dim,
                mean_acc: report.mean,
                std: report.std,
            });
        }
    }
    Ok(rows)
}

/// `p,D,mean_acc,std` with a header line.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: &mut W) -> Result<()> {
    writeln!(out, "p,D,mean_acc,std")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.p, r.dim, r.mean_acc, r.std)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationSpec {
    pub family: SyntheticFamily,
    /// Total point counts, split across clusters in the family's default
    /// proportions.
    pub sizes: Vec<usize>,
    pub p: PowerParam,
    pub trials: usize,
    pub dim: usize,
    pub sigma: f64,
    pub seed: u64,
}

impl SeparationSpec {
    /// Noise-free planar samples.
    pub fn new(family: SyntheticFamily, sizes: Vec<usize>, p: PowerParam, trials: usize, seed: u64) -> Self {
        Self {
            family,
            sizes,
            p,
            trials,
            dim: 2,
            sigma: 0.0,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationRow {
    pub n: usize,
    pub p: PowerParam,
    pub eps1: Quartiles,
    pub eps2: Option<Quartiles>,
    pub eps1_values: Vec<f64>,
    pub eps2_values: Vec<f64>,
}

/// Splits `n` in proportion to `weights`, remainder to the last part.
pub fn proportional_counts(n: usize, weights: &[usize]) -> Vec<usize> {
    let total: usize = weights.iter().sum();
    let mut counts: Vec<usize> = weights.iter().map(|&w| n * w / total).collect();
    let assigned: usize = counts.iter().sum();
    if let Some(last) = counts.last_mut() {
        *last += n - assigned;
    }
    counts
}

/// `ε₁` and `ε₂` from the exact all-pairs metric, per sample size.
pub fn run_separation_experiment(spec: &SeparationSpec) -> Result<Vec<SeparationRow>> {
    if spec.trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    spec.sizes
        .iter()
        .enumerate()
        .map(|(s, &n)| {
            let counts = proportional_counts(n, &spec.family.default_counts());
            let stats: Vec<_> = (0..spec.trials)
                .into_par_iter()
                .map(|t| {
                    let data = generate(
                        &SyntheticSpec::new(spec.family, derive(derive(spec.seed, s as u64), t as u64))
                            .with_counts(counts.clone())
                            .with_dim(spec.dim)
                            .with_sigma(spec.sigma),
                    )?;
                    let m = pairwise_exact(&data, spec.p)?;
                    Ok(separation_from_matrix(&m, data.labels().expect("synthetic labels")))
                })
                .collect::<Result<_>>()?;
            let eps1_values: Vec<f64> = stats.iter().map(|s| s.eps1).collect();
            let eps2_values: Vec<f64> = stats.iter().filter_map(|s| s.eps2).collect();
            Ok(SeparationRow {
                n,
                p: spec.p,
                eps1: Quartiles::of(&eps1_values),
                eps2: (!eps2_values.is_empty()).then(|| Quartiles::of(&eps2_values)),
                eps1_values,
                eps2_values,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn proportional_split() {
        assert_eq!(proportional_counts(1500, &[500, 500, 500]), vec![500, 500, 500]);
        assert_eq!(proportional_counts(750, &[222, 500, 778]), vec![111, 250, 389]);
        assert_eq!(proportional_counts(10, &[1, 1, 1]), vec![3, 3, 4]);
    }

    #[test]
    fn single_trial_is_reproducible() {
        let spec = SyntheticSpec::new(SyntheticFamily::ThreeMoons, 0)
            .with_points_per_cluster(40)
            .with_dim(5);
        let mut table = TableSpec::new(DataSource::Synthetic(spec), vec![PowerParam::finite(2.0).unwrap()], 1, 11);
        table.k = 8;
        table.r = 4;
        let a = run_table_experiment(&table).unwrap();
        let b = run_table_experiment(&table).unwrap();
        assert_eq!(a[0].accuracies, b[0].accuracies);
        assert_eq!(a[0].std, 0.0);
        assert!(a[0].accuracies[0] > 0.0 && a[0].accuracies[0] <= 1.0);
    }

    #[test]
    fn fixed_data_keeps_points() {
        let data = crate::eval::tests::chains(30);
        let mut table = TableSpec::new(DataSource::Fixed(data), vec![PowerParam::Infinity, PowerParam::EUCLIDEAN], 3, 5);
        table.variants = vec![SimilarityVariant::Knn, SimilarityVariant::Full];
        table.k = 6;
        table.r = 3;
        let reports = run_table_experiment(&table).unwrap();
        assert_eq!(reports.len(), 3);
        assert!(reports[0].data_seeds.is_empty());
        assert_eq!(reports[0].mean, 1.0);
        let text = format_table(&reports);
        assert!(text.contains("p = inf") && text.contains("100.00 ± 0.00"));
    }

    #[test]
    fn separation_lines_meet_spacing() {
        let spec = SeparationSpec::new(SyntheticFamily::ThreeLines, vec![90], PowerParam::finite(2.0).unwrap(), 2, 3);
        let rows = run_separation_experiment(&spec).unwrap();
        assert!(rows[0].eps2_values.iter().all(|&e| e >= 1.0 - 1e-12));
    }

    #[test]
    fn sweep_csv_layout() {
        let rows = [SweepRow {
            p: PowerParam::Infinity,
            dim: 10,
            mean_acc: 0.5,
            std: 0.25,
        }];
        let mut out = Vec::new();
        write_sweep_csv(&rows, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "p,D,mean_acc,std\ninf,10,0.5,0.25\n");
    }
}
