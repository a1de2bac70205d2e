use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use pwspm::dataset::{self, generate, DatasetDescriptor, Provenance, SyntheticSpec};
use pwspm::eval::{
    format_table, run_p_sweep, run_separation_experiment, run_table_experiment, write_sweep_csv,
    DataSource, SeparationSpec, SweepSpec, TableSpec,
};
use pwspm::path_knn::path_knn;
use pwspm::path_metrics::pairwise_exact;
use pwspm::{path_knn_all, run_pipeline, Dataset, PathNeighborResult, PipelineConfig, SpatialIndex};

use crate::{
    ClusterArgs, Command, GenerateArgs, InputArgs, KnnArgs, OutputArgs, ReplayArgs, SeparationArgs,
    SweepArgs, TableArgs,
};

/// What every JSON report contains: the command that produced it, with
/// all effective settings, and its result.
#[derive(Debug, Serialize, Deserialize)]
pub struct Report {
    pub config: Command,
    pub result: serde_json::Value,
}

pub fn run(command: Command) -> Result<()> {
    match &command {
        Command::Generate(args) => generate_cmd(args, &command),
        Command::Knn(args) => knn_cmd(args, &command),
        Command::Cluster(args) => cluster_cmd(args, &command),
        Command::Table(args) => table_cmd(args, &command),
        Command::Sweep(args) => sweep_cmd(args, &command),
        Command::Separation(args) => separation_cmd(args, &command),
        Command::Replay(args) => replay_cmd(args),
    }
}

fn create(path: &Path, force: bool) -> Result<BufWriter<File>> {
    if path.exists() && !force {
        bail!("{} already exists; pass --force to overwrite", path.display());
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_report(path: &Path, force: bool, command: &Command, result: impl Serialize) -> Result<()> {
    let report = Report {
        config: command.clone(),
        result: serde_json::to_value(result)?,
    };
    let mut out = create(path, force)?;
    serde_json::to_writer_pretty(&mut out, &report)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn print_report(command: &Command, result: impl Serialize) -> Result<()> {
    let report = Report {
        config: command.clone(),
        result: serde_json::to_value(result)?,
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    serde_json::to_writer_pretty(&mut out, &report)?;
    writeln!(out)?;
    Ok(())
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn load(input: &InputArgs) -> Result<Dataset> {
    dataset::load_csv(&input.data, &input.csv_options())
        .with_context(|| format!("loading {}", input.data.display()))
}

fn generate_cmd(args: &GenerateArgs, command: &Command) -> Result<()> {
    let mut spec = SyntheticSpec::new(args.family, args.seed)
        .with_dim(args.dim)
        .with_sigma(args.sigma);
    if let Some(n) = args.n_per {
        spec = spec.with_points_per_cluster(n);
    }
    if let Some(counts) = &args.counts {
        spec = spec.with_counts(counts.clone());
    }
    let data = generate(&spec)?;
    match &args.out.output {
        Some(path) => {
            let descriptor_path = sidecar(path);
            if descriptor_path == *path {
                bail!("output {} must not end in .json", path.display());
            }
            let mut out = create(path, args.out.force)?;
            dataset::write_csv(&data, &mut out)?;
            out.flush()?;
            let descriptor = DatasetDescriptor::new(&data, Provenance::Synthetic(spec));
            write_report(&descriptor_path, args.out.force, command, &descriptor)?;
            eprintln!(
                "wrote {} points in {} dimensions to {} ({})",
                data.len(),
                data.dim(),
                path.display(),
                descriptor_path.display()
            );
        }
        None => {
            let stdout = io::stdout();
            let mut out = BufWriter::new(stdout.lock());
            dataset::write_csv(&data, &mut out)?;
            out.flush()?;
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct KnnResult<'a> {
    neighborhoods: &'a [PathNeighborResult],
    max_deviation: Option<f64>,
}

fn knn_cmd(args: &KnnArgs, command: &Command) -> Result<()> {
    let data = load(&args.input)?;
    let index = SpatialIndex::build(&data);
    let results: Vec<PathNeighborResult> = if args.all {
        path_knn_all(&index, args.k, args.p)?
    } else {
        args.source
            .iter()
            .map(|&s| path_knn(&index, s, args.k, args.p))
            .collect::<pwspm::Result<_>>()?
    };

    let mut text = String::new();
    if args.all {
        for r in &results {
            let row: Vec<String> = r.neighbors.iter().map(|n| format!("{}:{}", n.index, n.distance)).collect();
            let _ = writeln!(text, "{}\t{}", r.source, row.join(" "));
        }
    } else {
        for r in &results {
            if results.len() > 1 {
                let _ = writeln!(text, "# source {}", r.source);
            }
            for n in &r.neighbors {
                let _ = writeln!(text, "{}\t{}", n.index, n.distance);
            }
        }
    }

    let mut max_deviation = None;
    if args.check_oracle {
        let oracle = pairwise_exact(&data, args.p)?;
        let mut worst: f64 = 0.0;
        for r in &results {
            let expected = oracle.nearest(r.source, args.k);
            for (got, (_, want)) in r.neighbors.iter().zip(&expected) {
                worst = worst.max((got.distance - want).abs());
                worst = worst.max((got.distance - oracle.get(r.source, got.index)).abs());
            }
        }
        let _ = writeln!(text, "max deviation {worst:.1e}");
        max_deviation = Some(worst);
    }
    if args.check_euclidean {
        if !args.p.is_euclidean() {
            bail!("--check-euclidean needs --p 1, got --p {}", args.p);
        }
        let mut mismatched = 0;
        for r in &results {
            let euclid = index.knn(r.source, args.k - 1)?;
            let same = r
                .others()
                .zip(&euclid.neighbors)
                .all(|(a, b)| a.index == b.index && a.distance == b.distance);
            if !same || r.others().count() != euclid.neighbors.len() {
                mismatched += 1;
            }
        }
        if mismatched > 0 {
            bail!("{mismatched} of {} neighborhoods differ from the Euclidean index", results.len());
        }
        let _ = writeln!(text, "euclidean check: {} neighborhoods match", results.len());
    }
    print!("{text}");
    if let Some(path) = &args.out.output {
        write_report(
            path,
            args.out.force,
            command,
            KnnResult {
                neighborhoods: &results,
                max_deviation,
            },
        )?;
    }
    Ok(())
}

fn cluster_cmd(args: &ClusterArgs, command: &Command) -> Result<()> {
    let data = load(&args.input)?;
    let clusters = match args.clusters.or(data.num_clusters()) {
        Some(c) => c,
        None => bail!("--clusters is required for unlabeled data"),
    };
    let mut config = PipelineConfig::new(args.variant, args.p, clusters, args.pipeline.seed);
    config.k = args.pipeline.k;
    config.r = args.pipeline.r;
    config.spectral.eigsolver = args.pipeline.eigsolver;
    config.spectral.kmeans_restarts = args.pipeline.restarts;
    let result = run_pipeline(&data, &config, None)?;
    match result.accuracy {
        Some(acc) => eprintln!("accuracy {:.2}% in {:.3}s", 100.0 * acc, result.timings.total()),
        None => eprintln!("clustered {} points in {:.3}s", data.len(), result.timings.total()),
    }
    match &args.out.output {
        Some(path) => write_report(path, args.out.force, command, &result),
        None => print_report(command, &result),
    }
}

fn table_cmd(args: &TableArgs, command: &Command) -> Result<()> {
    let (source, default_trials) = match (&args.family, &args.data) {
        (Some(family), _) => {
            let mut spec = SyntheticSpec::new(*family, 0)
                .with_dim(args.dim)
                .with_sigma(args.sigma);
            if let Some(n) = args.n_per {
                spec = spec.with_points_per_cluster(n);
            }
            (DataSource::Synthetic(spec), 50)
        }
        (None, Some(path)) => {
            let input = InputArgs {
                data: path.clone(),
                labels: args.labels,
                header: args.header,
            };
            (DataSource::Fixed(load(&input)?), 10)
        }
        (None, None) => bail!("either --family or --data is required"),
    };
    let mut spec = TableSpec::new(source, args.p.clone(), args.trials.unwrap_or(default_trials), args.pipeline.seed);
    spec.variants = args.variants.clone();
    spec.k = args.pipeline.k;
    spec.r = args.pipeline.r;
    spec.eigsolver = args.pipeline.eigsolver;
    spec.kmeans_restarts = args.pipeline.restarts;
    let reports = run_table_experiment(&spec)?;
    let text = format_table(&reports);
    print!("{text}");
    if let Some(path) = &args.out.output {
        write_report(path, args.out.force, command, &reports)?;
        let results = path.with_file_name("results.txt");
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&results)
            .with_context(|| format!("opening {}", results.display()))?;
        writeln!(file, "# {} ({} trials, seed {})", path.display(), spec.trials, spec.seed)?;
        write!(file, "{text}")?;
    }
    Ok(())
}

fn sweep_cmd(args: &SweepArgs, command: &Command) -> Result<()> {
    let mut spec = SweepSpec::new(args.family, args.n_per, args.dims.clone(), args.p_max, args.trials, args.seed);
    spec.k = args.k;
    spec.r = args.r;
    spec.sigma = args.sigma;
    let rows = run_p_sweep(&spec)?;
    match &args.out.output {
        Some(path) => {
            let report_path = sidecar(path);
            if report_path == *path {
                bail!("output {} must not end in .json", path.display());
            }
            let mut out = create(path, args.out.force)?;
            write_sweep_csv(&rows, &mut out)?;
            out.flush()?;
            write_report(&report_path, args.out.force, command, &rows)?;
        }
        None => write_sweep_csv(&rows, &mut io::stdout().lock())?,
    }
    Ok(())
}

fn separation_cmd(args: &SeparationArgs, command: &Command) -> Result<()> {
    let mut spec = SeparationSpec::new(args.family, args.sizes.clone(), args.p, args.trials, args.seed);
    spec.dim = args.dim;
    spec.sigma = args.sigma;
    let rows = run_separation_experiment(&spec)?;
    println!("{:>8}  {:>10}  {:>10}  {:>10}  {:>10}", "n", "eps1 q1", "eps1 med", "eps1 q3", "eps2 med");
    for r in &rows {
        let eps2 = r.eps2.map_or_else(|| "-".to_string(), |q| format!("{:.6}", q.median));
        println!(
            "{:>8}  {:>10.6}  {:>10.6}  {:>10.6}  {:>10}",
            r.n, r.eps1.q1, r.eps1.median, r.eps1.q3, eps2
        );
    }
    if let Some(path) = &args.out.output {
        write_report(path, args.out.force, command, &rows)?;
    }
    Ok(())
}

fn output_of(command: &mut Command) -> Option<&mut OutputArgs> {
    match command {
        Command::Generate(a) => Some(&mut a.out),
        Command::Knn(a) => Some(&mut a.out),
        Command::Cluster(a) => Some(&mut a.out),
        Command::Table(a) => Some(&mut a.out),
        Command::Sweep(a) => Some(&mut a.out),
        Command::Separation(a) => Some(&mut a.out),
        Command::Replay(_) => None,
    }
}

fn replay_cmd(args: &ReplayArgs) -> Result<()> {
    let text = fs::read_to_string(&args.report)
        .with_context(|| format!("reading {}", args.report.display()))?;
    let report: Report = serde_json::from_str(&text)
        .with_context(|| format!("{} is not a pwspm report", args.report.display()))?;
    let mut command = report.config;
    match output_of(&mut command) {
        Some(out) => *out = args.out.clone(),
        None => bail!("a report cannot record a replay"),
    }
    run(command)
}
