//! Command-line surface: partition / train / eval / bench-cost / inspect.
//!
//! Exit codes: 0 success, 1 data or numeric failure, 2 usage error.

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::data::{load_dataset, normalize_features, write_atomic};
use crate::error::{Error, Result};
use crate::model::predict_metrics;
use crate::partition::{
    metis_like_partition, quality, random_partition, read_partition, write_partition, Partition,
};
use crate::train::{expansion_cost, train, write_report, TrainConfig};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::path::{Path, PathBuf};

/// A full run description: the training configuration plus every path the
/// CLI needs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub partition_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Metis,
    Random,
}

#[derive(Parser)]
#[command(
    name = "cluster-gcn",
    version,
    about = "GCN training with cluster-partitioned mini-batch SGD"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Partition a dataset's graph and report its quality.
    Partition {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        clusters: usize,
        #[arg(long, value_enum, default_value_t = Method::Metis)]
        method: Method,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Partition file to write; quality JSON lands next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model per a JSON config; writes report.json/report.csv and a
    /// checkpoint into the output directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Externally produced partition file (e.g. real METIS output).
        #[arg(long)]
        partition: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the test micro-F1 of a checkpoint.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Compare neighborhood-expansion cost against cluster-mode counters.
    BenchCost {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        layers: usize,
        #[arg(long)]
        sample_cap: Option<usize>,
        #[arg(long, default_value_t = 10)]
        clusters: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Edge cut, within fraction, and the per-cluster label-entropy
    /// histogram of a partition.
    Inspect {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        partition: PathBuf,
    },
}

/// Run the CLI against explicit argv (index 0 is the program name).
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap reports 2 for usage errors and 0 for --help/--version.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.cmd) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Partition {
            data,
            clusters,
            method,
            seed,
            out,
        } => cmd_partition(&data, clusters, method, seed, &out),
        Command::Train {
            data,
            config,
            partition,
            out,
        } => cmd_train(&data, &config, partition.as_deref(), &out),
        Command::Eval { data, checkpoint } => cmd_eval(&data, &checkpoint),
        Command::BenchCost {
            data,
            layers,
            sample_cap,
            clusters,
            seed,
        } => cmd_bench_cost(&data, layers, sample_cap, clusters, seed),
        Command::Inspect { data, partition } => cmd_inspect(&data, &partition),
    }
}

fn quality_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".quality.json");
    out.with_file_name(name)
}

#[derive(Serialize)]
struct QualityReport<'a> {
    n_clusters: usize,
    edge_cut: u64,
    within_edges: u64,
    within_fraction: f64,
    balance: f64,
    label_entropy: &'a [f64],
    mean_label_entropy: f64,
}

fn cmd_partition(data: &Path, clusters: usize, method: Method, seed: u64, out: &Path) -> Result<()> {
    let ds = load_dataset(data)?;
    let part = match method {
        Method::Metis => metis_like_partition(&ds.graph, clusters, seed)?,
        Method::Random => random_partition(ds.n_nodes(), clusters, seed)?,
    };
    write_partition(out, &part)?;
    let q = quality(&ds.graph, &part, Some(&ds.labels))?;
    let report = QualityReport {
        n_clusters: part.n_clusters(),
        edge_cut: q.edge_cut,
        within_edges: q.within_edges,
        within_fraction: q.within_fraction,
        balance: q.balance,
        label_entropy: &q.label_entropy,
        mean_label_entropy: q.mean_label_entropy(),
    };
    let json = serde_json::to_string_pretty(&report)?;
    write_atomic(&quality_path(out), json.as_bytes())?;
    println!(
        "partitioned {} nodes into {} clusters: edge_cut={} within_fraction={:.4} balance={:.3}",
        ds.n_nodes(),
        part.n_clusters(),
        q.edge_cut,
        q.within_fraction,
        part.balance()
    );
    Ok(())
}

fn cmd_train(data: &Path, config: &Path, partition: Option<&Path>, out: &Path) -> Result<()> {
    let ds = load_dataset(data)?;
    let text = std::fs::read_to_string(config)?;
    let cfg = TrainConfig::from_json(&text)?;
    let run = RunConfig {
        train: cfg,
        data_dir: data.to_path_buf(),
        out_dir: out.to_path_buf(),
        partition_file: partition.map(Path::to_path_buf),
    };

    let external: Option<Partition> = match &run.partition_file {
        Some(path) => Some(read_partition(path, None)?),
        None => None,
    };
    let outcome = train(&run.train, &ds, external.as_ref())?;

    std::fs::create_dir_all(&run.out_dir)?;
    write_report(&run.out_dir, &outcome.report)?;
    save_checkpoint(
        &run.out_dir.join("model.json"),
        &outcome.model,
        run.train.norm_mode,
        Some(&outcome.adam),
    )?;

    let last = outcome.report.epochs.last();
    println!(
        "trained {} epochs: final loss={} test_micro_f1={}",
        outcome.report.epochs.len(),
        last.map(|r| r.loss).unwrap_or(f64::NAN),
        outcome
            .report
            .test_f1
            .map(|v| format!("{v:.4}"))
            .unwrap_or_else(|| "n/a".into()),
    );
    Ok(())
}

fn cmd_eval(data: &Path, checkpoint: &Path) -> Result<()> {
    let ds = load_dataset(data)?;
    let (model, norm_mode, _) = load_checkpoint(checkpoint)?;
    if ds.splits.test.is_empty() {
        return Err(Error::input("dataset has no test split"));
    }
    let x = normalize_features(&ds.features, &ds.splits.train)?;
    let adj = norm_mode.apply(&ds.graph)?;
    let (f1, acc) = predict_metrics(&model, &adj, &x, &ds.labels, &ds.splits.test)?;
    println!("test_micro_f1\t{f1}");
    println!("test_accuracy\t{acc}");
    Ok(())
}

fn cmd_bench_cost(
    data: &Path,
    layers: usize,
    sample_cap: Option<usize>,
    clusters: usize,
    seed: u64,
) -> Result<()> {
    if layers < 1 {
        return Err(Error::input("--layers must be at least 1"));
    }
    let ds = load_dataset(data)?;
    let part = metis_like_partition(&ds.graph, clusters, seed)?;
    let batch_nodes: Vec<usize> = part.cluster(0).to_vec();
    let n = ds.n_nodes() as u64;
    let b = batch_nodes.len() as u64;

    println!("neighborhood expansion from a {b}-node batch vs cluster-mode work (N={n})");
    println!("layers\texpansion\texpansion_cap\tcluster_batch_embeddings\tcluster_epoch_embeddings");
    for l in 1..=layers {
        let full = expansion_cost(&ds.graph, &batch_nodes, l, None, seed)?;
        let capped = match sample_cap {
            Some(cap) => expansion_cost(&ds.graph, &batch_nodes, l, Some(cap), seed)?.to_string(),
            None => "-".into(),
        };
        println!(
            "{l}\t{full}\t{capped}\t{}\t{}",
            l as u64 * b,
            l as u64 * n
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct InspectReport<'a> {
    n_clusters: usize,
    edge_cut: u64,
    within_fraction: f64,
    balance: f64,
    label_entropy: &'a [f64],
    mean_label_entropy: f64,
    histogram: Histogram,
}

#[derive(Serialize)]
struct Histogram {
    bin_edges: Vec<f64>,
    counts: Vec<u64>,
}

/// Fixed-width histogram over [0, max(ln K, observed max)].
fn entropy_histogram(entropies: &[f64], n_classes: usize, n_bins: usize) -> Histogram {
    let mut hi = (n_classes.max(2) as f64).ln();
    for &e in entropies {
        hi = hi.max(e);
    }
    let width = hi / n_bins as f64;
    let mut counts = vec![0u64; n_bins];
    for &e in entropies {
        let bin = ((e / width) as usize).min(n_bins - 1);
        counts[bin] += 1;
    }
    let bin_edges = (0..=n_bins).map(|i| i as f64 * width).collect();
    Histogram { bin_edges, counts }
}

fn cmd_inspect(data: &Path, partition: &Path) -> Result<()> {
    let ds = load_dataset(data)?;
    let part = read_partition(partition, Some(ds.n_nodes()))?;
    let q = quality(&ds.graph, &part, Some(&ds.labels))?;
    let report = InspectReport {
        n_clusters: part.n_clusters(),
        edge_cut: q.edge_cut,
        within_fraction: q.within_fraction,
        balance: q.balance,
        label_entropy: &q.label_entropy,
        mean_label_entropy: q.mean_label_entropy(),
        histogram: entropy_histogram(&q.label_entropy, ds.n_classes(), 20),
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
