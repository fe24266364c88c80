//! Command-line front end: simulation runs, NN-level and scaling benchmarks,
//! archive sizing and trace recording/replay.
//!
//! Reports go to `--out` as JSON lines plus a CSV summary; a one-object
//! JSON summary is printed to stdout. Exit codes: 0 ok, 1 runtime failure,
//! 2 invalid configuration, 3 infeasible archive sizing.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use shoal::archive::{optimize, sweep, DiskModelParams, OptimizeError};
use shoal::bench::{replay_trace, run_nnbench, run_scaling, run_simulation, BenchError, BenchReport, NnBenchConfig, SimConfig};
use shoal::workload::{record_trace, WorkloadError};

#[derive(Parser, Debug)]
#[command(name = "shoal", version, about = "Moving-object index simulator and benchmarks")]
struct Cli {
    /// Workload seed, applied after the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Run configuration, one `key = value` per line.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Directory for report files.
    #[arg(long, global = true, default_value = ".", value_name = "DIR")]
    out: PathBuf,

    /// Configuration override, applied after the file; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the configured workload with schooling, clustering, archiving and queries.
    Simulate,
    /// Rows scanned per kNN query at every fixed NN level and with adaptive levels.
    Nnbench(NnArgs),
    /// Choose the archive disk count for a disk model.
    ArchiveOpt(OptArgs),
    /// Run the same workload with several ingest worker counts.
    Scaling {
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 5, 10])]
        workers: Vec<usize>,
    },
    /// Record or replay update traces.
    Trace {
        #[command(subcommand)]
        action: TraceAction,
    },
}

#[derive(Subcommand, Debug)]
enum TraceAction {
    /// Write the configured workload to a trace file.
    Record { path: PathBuf },
    /// Run a simulation that ingests a trace file instead of the generator.
    Replay { path: PathBuf },
}

#[derive(Args, Debug)]
struct NnArgs {
    /// Object counts to test.
    #[arg(long, value_delimiter = ',', default_values_t = [1_000usize, 10_000, 50_000, 100_000])]
    densities: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    spatial_level: u8,
    #[arg(long, default_value_t = 200)]
    queries: usize,
    /// Queries per density checked against exhaustive search.
    #[arg(long, default_value_t = 250)]
    exact_sample: usize,
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Target leaders per NN cell, also the per-scan cost in rows.
    #[arg(long, default_value_t = 32.0)]
    sigma: f64,
}

#[derive(Args, Debug)]
struct OptArgs {
    /// Rotational latency, seconds.
    #[arg(long, default_value_t = 0.006)]
    t_rot: f64,
    /// Seek time, seconds.
    #[arg(long, default_value_t = 0.004)]
    t_seek: f64,
    /// Transfer rate, bytes per second.
    #[arg(long, default_value_t = 1e8)]
    r_disk: f64,
    /// Read-resolution normalization factor.
    #[arg(long, default_value_t = 1e4)]
    k: f64,
    /// Bytes per record.
    #[arg(long, default_value_t = 100.0)]
    s_rec: f64,
    /// Number of objects.
    #[arg(long, default_value_t = 1e6)]
    n_o: f64,
    /// Records arriving per second.
    #[arg(long, default_value_t = 1e6)]
    update_rate: f64,
    /// Largest disk count considered.
    #[arg(long, default_value_t = 1_000)]
    n_max: u64,
    /// Print every disk count's utilization curve as CSV instead.
    #[arg(long)]
    sweep: bool,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Infeasible(String),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Bench(BenchError::Config(_)) => 2,
            CliError::Bench(BenchError::Workload(WorkloadError::Config(_))) => 2,
            CliError::Infeasible(_) => 3,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("shoal: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate => {
            let report = run_simulation(&sim_config(cli)?)?;
            write_report(cli, "simulate", &report)
        }
        Command::Nnbench(args) => nnbench(cli, args),
        Command::ArchiveOpt(args) => archive_opt(args),
        Command::Scaling { workers } => scaling(cli, workers),
        Command::Trace { action: TraceAction::Record { path } } => {
            let cfg = sim_config(cli)?;
            let n = record_trace(&cfg.workload, path).map_err(BenchError::from)?;
            println!("{}", json!({ "trace": path, "updates": n }));
            Ok(())
        }
        Command::Trace { action: TraceAction::Replay { path } } => {
            let report = replay_trace(&sim_config(cli)?, path)?;
            write_report(cli, "replay", &report)
        }
    }
}

/// Defaults, then the config file, then `--set` overrides, then `--seed`.
fn sim_config(cli: &Cli) -> Result<SimConfig, CliError> {
    let mut cfg = SimConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        cfg.apply_kv(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    }
    for kv in &cli.set {
        cfg.apply_override(kv)?;
    }
    if let Some(seed) = cli.seed {
        cfg.workload.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(cli: &Cli, name: &str) -> Result<(PathBuf, BufWriter<File>), CliError> {
    std::fs::create_dir_all(&cli.out).map_err(io_err(&cli.out))?;
    let path = cli.out.join(name);
    let file = File::create(&path).map_err(io_err(&path))?;
    Ok((path, BufWriter::new(file)))
}

/// Serializes `value` as one JSON object tagged with `kind`.
fn tagged(kind: &str, value: &impl serde::Serialize) -> Result<Value, CliError> {
    let mut v = serde_json::to_value(value)?;
    if let Value::Object(map) = &mut v {
        map.insert("kind".into(), Value::from(kind));
    }
    Ok(v)
}

fn write_lines(path: &Path, out: &mut impl Write, lines: &[Value]) -> Result<(), CliError> {
    for line in lines {
        writeln!(out, "{line}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// `<name>.jsonl` with the config, every bucket, every clustering sample
/// and the summary; `<name>.csv` with the per-second series.
fn write_report(cli: &Cli, name: &str, report: &BenchReport) -> Result<(), CliError> {
    let mut lines = vec![tagged("config", &report.config)?];
    for b in &report.series {
        lines.push(tagged("bucket", b)?);
    }
    for c in &report.clustering {
        lines.push(tagged("clustering", c)?);
    }
    lines.push(tagged("summary", &report.summary)?);
    let (path, mut out) = create(cli, &format!("{name}.jsonl"))?;
    write_lines(&path, &mut out, &lines)?;

    let (_, out) = create(cli, &format!("{name}.csv"))?;
    let mut csv = csv::Writer::from_writer(out);
    for b in &report.series {
        csv.serialize(b)?;
    }
    if report.series.is_empty() {
        csv.write_record(["t", "received", "shed", "written", "failed", "store_writes", "os_count", "queries", "failed_queries"])?;
    }
    csv.flush().map_err(io_err(&path))?;
    println!("{}", serde_json::to_string(&report.summary)?);
    Ok(())
}

fn nnbench(cli: &Cli, args: &NnArgs) -> Result<(), CliError> {
    let cfg = NnBenchConfig {
        seed: cli.seed.unwrap_or(NnBenchConfig::default().seed),
        densities: args.densities.clone(),
        spatial_level: args.spatial_level,
        queries: args.queries,
        exact_sample: args.exact_sample,
        k: args.k,
        sigma: args.sigma,
        ..NnBenchConfig::default()
    };
    let report = run_nnbench(&cfg)?;
    let mut lines = vec![tagged("config", &report.config)?];
    for d in &report.densities {
        lines.push(tagged("density", d)?);
    }
    let worst: Vec<Value> = report.worst_fixed_ratios().iter().map(|(l, r)| json!({ "level": l, "worst_ratio": r })).collect();
    lines.push(json!({ "kind": "fixed_levels", "levels": worst }));
    let (path, mut out) = create(cli, "nnbench.jsonl")?;
    write_lines(&path, &mut out, &lines)?;

    let (path, out) = create(cli, "nnbench.csv")?;
    let mut csv = csv::Writer::from_writer(out);
    csv.write_record(["objects", "level", "rows_per_query", "micros_per_query"])?;
    for d in &report.densities {
        for f in &d.fixed {
            csv.write_record([d.objects.to_string(), f.level.to_string(), f.rows_per_query.to_string(), f.micros_per_query.to_string()])?;
        }
        csv.write_record([d.objects.to_string(), "adaptive".into(), d.flag.rows_per_query.to_string(), d.flag.micros_per_query.to_string()])?;
    }
    csv.flush().map_err(io_err(&path))?;
    let summary: Vec<Value> = report
        .densities
        .iter()
        .map(|d| {
            json!({
                "objects": d.objects,
                "best_level": d.best_level,
                "adaptive_ratio": d.flag_ratio,
                "exact_mismatches": d.exact_mismatches,
            })
        })
        .collect();
    println!("{}", Value::from(summary));
    Ok(())
}

fn archive_opt(args: &OptArgs) -> Result<(), CliError> {
    let p = DiskModelParams {
        t_rot: args.t_rot,
        t_seek: args.t_seek,
        r_disk: args.r_disk,
        k: args.k,
        s_rec: args.s_rec,
        n_o: args.n_o,
        update_rate: args.update_rate,
    };
    p.validate().map_err(|e| CliError::Config(e.to_string()))?;
    if args.sweep {
        let mut csv = csv::Writer::from_writer(io::stdout().lock());
        for point in sweep(&p, args.n_max) {
            csv.serialize(point)?;
        }
        csv.flush().map_err(io_err(Path::new("stdout")))?;
        return Ok(());
    }
    match optimize(&p, args.n_max) {
        Ok(r) => {
            println!("{}", serde_json::to_string(&r)?);
            Ok(())
        }
        Err(e @ OptimizeError::Infeasible { .. }) => Err(CliError::Infeasible(e.to_string())),
        Err(e) => Err(CliError::Config(e.to_string())),
    }
}

fn scaling(cli: &Cli, workers: &[usize]) -> Result<(), CliError> {
    if workers.is_empty() || workers.contains(&0) {
        return Err(CliError::Config("worker counts must be at least 1".into()));
    }
    let points = run_scaling(&sim_config(cli)?, workers)?;
    let lines = points.iter().map(|p| tagged("scaling", p)).collect::<Result<Vec<_>, _>>()?;
    let (path, mut out) = create(cli, "scaling.jsonl")?;
    write_lines(&path, &mut out, &lines)?;
    let (path, out) = create(cli, "scaling.csv")?;
    let mut csv = csv::Writer::from_writer(out);
    for p in &points {
        csv.serialize(p)?;
    }
    csv.flush().map_err(io_err(&path))?;
    println!("{}", serde_json::to_string(&points)?);
    Ok(())
}
