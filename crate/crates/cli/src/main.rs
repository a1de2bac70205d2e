//! `pwspm`: generate datasets, query path-metric neighbors, cluster, and
//! run the benchmark experiments.

mod commands;

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use pwspm::dataset::{CsvOptions, LabelColumn};
use pwspm::spectral::EigenSolver;
use pwspm::{PowerParam, SimilarityVariant, SyntheticFamily};

#[derive(Debug, Parser)]
#[command(name = "pwspm", version, about = "Power-weighted shortest-path metrics and spectral clustering")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "PWSPM_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Write a synthetic dataset as CSV plus a JSON descriptor.
    Generate(GenerateArgs),
    /// Nearest neighbors under d^(p).
    Knn(KnnArgs),
    /// Spectral clustering of one dataset.
    Cluster(ClusterArgs),
    /// Accuracy table over repeated trials.
    Table(TableArgs),
    /// Accuracy as a function of p for several ambient dimensions.
    Sweep(SweepArgs),
    /// Intra- and inter-cluster path distances versus sample size.
    Separation(SeparationArgs),
    /// Re-run the command recorded in a JSON report.
    Replay(ReplayArgs),
}

/// Label column of an input CSV: `last`, a zero-based index, or `none`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelArg(pub Option<LabelColumn>);

impl FromStr for LabelArg {
    type Err = pwspm::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("none") {
            Ok(Self(None))
        } else {
            s.parse().map(|c| Self(Some(c)))
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct InputArgs {
    /// CSV file, one point per row.
    pub data: PathBuf,
    /// Label column: `last`, a zero-based index, or `none`.
    #[arg(long, default_value = "last")]
    pub labels: LabelArg,
    /// Skip a header row.
    #[arg(long)]
    pub header: bool,
}

impl InputArgs {
    pub fn csv_options(&self) -> CsvOptions {
        CsvOptions {
            label_column: self.labels.0,
            has_header: self.header,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct OutputArgs {
    /// Output file (stdout when omitted).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Overwrite existing output files.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GenerateArgs {
    pub family: SyntheticFamily,
    /// Points on every cluster.
    #[arg(long, conflicts_with = "counts")]
    pub n_per: Option<usize>,
    /// Points per cluster, one value per cluster.
    #[arg(long, value_delimiter = ',')]
    pub counts: Option<Vec<usize>>,
    #[arg(long, default_value_t = 50)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.14)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct KnnArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value = "2")]
    pub p: PowerParam,
    /// Neighbors per source, the source itself included.
    #[arg(long, default_value_t = 15)]
    pub k: usize,
    /// Source point indices.
    #[arg(long, value_delimiter = ',', required_unless_present = "all")]
    pub source: Vec<usize>,
    /// Query every point.
    #[arg(long, conflicts_with = "source")]
    pub all: bool,
    /// Compare against the exact all-pairs oracle.
    #[arg(long)]
    pub check_oracle: bool,
    /// With p = 1, compare against the Euclidean index.
    #[arg(long)]
    pub check_euclidean: bool,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PipelineArgs {
    #[arg(long, default_value_t = pwspm::similarity::DEFAULT_K)]
    pub k: usize,
    #[arg(long, default_value_t = pwspm::similarity::DEFAULT_R)]
    pub r: usize,
    #[arg(long, default_value = "auto")]
    pub eigsolver: EigenSolver,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value = "2")]
    pub p: PowerParam,
    #[arg(long, default_value = "knn")]
    pub variant: SimilarityVariant,
    /// Number of clusters (default: number of distinct labels).
    #[arg(long)]
    pub clusters: Option<usize>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TableArgs {
    /// Synthetic family, redrawn every trial.
    #[arg(long, required_unless_present = "data", conflicts_with = "data")]
    pub family: Option<SyntheticFamily>,
    /// Labeled CSV, fixed across trials.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "last")]
    pub labels: LabelArg,
    #[arg(long)]
    pub header: bool,
    #[arg(long, value_delimiter = ',', default_value = "1,2,10,inf")]
    pub p: Vec<PowerParam>,
    #[arg(long, value_delimiter = ',', default_value = "knn")]
    pub variants: Vec<SimilarityVariant>,
    /// Trials (default: 50 synthetic, 10 fixed).
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub n_per: Option<usize>,
    #[arg(long, default_value_t = 50)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.14)]
    pub sigma: f64,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SweepArgs {
    #[arg(long, default_value = "three-lines")]
    pub family: SyntheticFamily,
    #[arg(long, value_delimiter = ',', default_value = "10,50,100")]
    pub dims: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    pub p_max: usize,
    #[arg(long, default_value_t = 300)]
    pub n_per: usize,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 0.14)]
    pub sigma: f64,
    #[arg(long, default_value_t = pwspm::similarity::DEFAULT_K)]
    pub k: usize,
    #[arg(long, default_value_t = pwspm::similarity::DEFAULT_R)]
    pub r: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV output; a JSON report is written next to it.
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SeparationArgs {
    #[arg(long, default_value = "three-lines")]
    pub family: SyntheticFamily,
    /// Total sample sizes.
    #[arg(long, value_delimiter = ',', default_value = "250,500,1000")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value = "2")]
    pub p: PowerParam,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReplayArgs {
    /// A JSON report written by an earlier run.
    pub report: PathBuf,
    #[command(flatten)]
    pub out: OutputArgs,
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()?;
    }
    commands::run(cli.command)
}
