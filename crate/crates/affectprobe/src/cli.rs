//! Command-line interface: thin adapters from flags to library calls.
//!
//! Exit codes: 0 success, 1 domain error (bad data, backend failures),
//! 2 usage error (bad flags, missing input files).

use std::collections::BTreeMap;
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use affectprobe::correlation::{correlation_matrix, Series};
use affectprobe::gateway::{serve, MockScript};
use affectprobe::manifest::{
    normalize_label, DatasetManifest, FrameProber, LabelTaxonomy, SplitPurpose, SplitSpec,
};
use affectprobe::metrics::MetricsReport;
use affectprobe::runner::{self, ExperimentConfig, RunRecord, TaxonomySpec};

pub enum CliError {
    /// Wrong invocation: unknown flags, unreadable input paths.
    Usage(String),
    /// The tool ran but the work failed.
    Domain(anyhow::Error),
}

pub type CliResult = Result<(), CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn domain(err: impl Into<anyhow::Error>) -> CliError {
    CliError::Domain(err.into())
}

#[derive(Parser)]
#[command(
    name = "affectprobe",
    version,
    about = "Video emotion-recognition diagnostics: balanced splits, shuffle and FPS probes, enriched-context inference"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit seeded balanced test/train splits from a manifest.
    Split(SplitArgs),
    /// Execute an experiment config against a backend or mock.
    Run(RunArgs),
    /// Recompute metrics from a results.jsonl file.
    Metrics(MetricsArgs),
    /// Pairwise Pearson correlation table over frequency/F1 series.
    Correlate(CorrelateArgs),
    /// Re-emit report files from a saved run record.
    Report(ReportArgs),
    /// Serve a scripted mock over the chat-completions wire protocol.
    MockServe(MockServeArgs),
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Built-in name (mafw, dfew) or path to a taxonomy JSON file.
    #[arg(long)]
    taxonomy: String,
    #[arg(long)]
    per_class: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for test.jsonl and train.jsonl.
    #[arg(long)]
    out: PathBuf,
    /// Metadata probe command for video-file sources ({input} placeholder).
    #[arg(long)]
    probe_command: Option<String>,
    /// Print a machine-readable JSON summary.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override the response-cache directory (also: AFFECTPROBE_CACHE_DIR).
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Override backend parallelism.
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    taxonomy: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CorrelateArgs {
    /// Frequency CSV (label,frequency); repeatable, named by file stem.
    #[arg(long = "freq-csv")]
    freq_csv: Vec<PathBuf>,
    /// Metrics JSON export; the per-class F1 column becomes a series.
    #[arg(long = "f1-json")]
    f1_json: Vec<PathBuf>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Also write the full matrix as JSON.
    #[arg(long)]
    out_json: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    record: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct MockServeArgs {
    #[arg(long)]
    script: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8089")]
    addr: SocketAddr,
}

pub fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            std::process::ExitCode::from(2)
        }
        Err(CliError::Domain(err)) => {
            eprintln!("error: {err:#}");
            std::process::ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> CliResult {
    match cli.command {
        Command::Split(args) => cmd_split(args),
        Command::Run(args) => cmd_run(args),
        Command::Metrics(args) => cmd_metrics(args),
        Command::Correlate(args) => cmd_correlate(args),
        Command::Report(args) => cmd_report(args),
        Command::MockServe(args) => cmd_mock_serve(args),
    }
}

fn resolve_taxonomy(spec: &str) -> Result<LabelTaxonomy, CliError> {
    TaxonomySpec(spec.to_string())
        .resolve()
        .map_err(|e| usage(e.to_string()))
}

fn require_file(path: &Path, what: &str) -> Result<(), CliError> {
    if !path.is_file() {
        return Err(usage(format!("{what} '{}' not found", path.display())));
    }
    Ok(())
}

fn cmd_split(args: SplitArgs) -> CliResult {
    require_file(&args.manifest, "manifest")?;
    let taxonomy = resolve_taxonomy(&args.taxonomy)?;
    let prober = FrameProber {
        probe_command: args.probe_command.clone(),
    };
    let manifest = DatasetManifest::load_with_prober(&args.manifest, &taxonomy, &prober)
        .map_err(domain)?;
    let spec = SplitSpec {
        per_class: args.per_class,
        seed: args.seed,
        purpose: SplitPurpose::Test,
    };
    let (test, train) = manifest.balanced_split(&spec).map_err(domain)?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("create '{}'", args.out.display()))
        .map_err(CliError::Domain)?;
    let test_path = args.out.join("test.jsonl");
    let train_path = args.out.join("train.jsonl");
    test.save(&test_path).map_err(domain)?;
    train.save(&train_path).map_err(domain)?;
    if args.json {
        println!(
            "{}",
            json!({
                "test": { "path": test_path, "samples": test.len() },
                "train": { "path": train_path, "samples": train.len() },
                "per_class": args.per_class,
                "seed": args.seed,
                "histogram": test.class_histogram(),
            })
        );
    } else {
        println!(
            "wrote {} ({} samples) and {} ({} samples)",
            test_path.display(),
            test.len(),
            train_path.display(),
            train.len()
        );
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> CliResult {
    require_file(&args.config, "config file")?;
    let mut config = ExperimentConfig::load(&args.config).map_err(|e| usage(e.to_string()))?;
    if let Some(dir) = args
        .cache_dir
        .or_else(|| std::env::var_os("AFFECTPROBE_CACHE_DIR").map(PathBuf::from))
    {
        config.cache_dir = Some(dir);
    }
    if let Some(par) = args.parallelism {
        config.backend.parallelism = par;
        if let Some(stage1) = config.stage1_backend.as_mut() {
            stage1.parallelism = par;
        }
    }

    let rt = tokio::runtime::Runtime::new()
        .context("start async runtime")
        .map_err(CliError::Domain)?;
    let output = rt.block_on(runner::run(&config)).map_err(domain)?;
    let record = &output.record;

    if args.json {
        let conditions: Vec<_> = record
            .conditions
            .iter()
            .map(|c| {
                json!({
                    "condition": c.condition.name,
                    "macro_f1": c.metrics.macro_f1,
                    "uar": c.metrics.uar,
                    "war": c.metrics.war,
                    "failures": c.failures.len(),
                })
            })
            .collect();
        println!(
            "{}",
            json!({
                "run_id": record.run_id,
                "run_dir": output.run_dir,
                "conditions": conditions,
                "dispatched": record.usage.dispatched,
                "cache_hits": record.usage.cache_hits,
            })
        );
    } else {
        println!("run {} -> {}", record.run_id, output.run_dir.display());
        for c in &record.conditions {
            println!(
                "  {:<12} macro_f1={:.4} uar={:.4} war={:.4} failures={}",
                c.condition.name,
                c.metrics.macro_f1,
                c.metrics.uar,
                c.metrics.war,
                c.failures.len()
            );
        }
        if record.usage.dispatched == 0 {
            println!(
                "  0 network calls ({} responses served from cache)",
                record.usage.cache_hits
            );
        } else {
            println!(
                "  {} backend calls, {} cache hits",
                record.usage.dispatched, record.usage.cache_hits
            );
        }
    }
    Ok(())
}

fn cmd_metrics(args: MetricsArgs) -> CliResult {
    require_file(&args.results, "results file")?;
    let taxonomy = resolve_taxonomy(&args.taxonomy)?;
    let rows = runner::load_rows(&args.results).map_err(domain)?;
    if rows.is_empty() {
        return Err(domain(anyhow!("no result rows in '{}'", args.results.display())));
    }
    let confusions = runner::confusions_from_rows(&rows, &taxonomy).map_err(domain)?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("create '{}'", args.out.display()))
        .map_err(CliError::Domain)?;
    let mut summary = BTreeMap::new();
    for (condition, cm) in &confusions {
        let report = cm.report().map_err(domain)?;
        fs::write(
            args.out.join(format!("metrics_{condition}.csv")),
            report.to_csv(),
        )
        .context("write metrics csv")
        .map_err(CliError::Domain)?;
        fs::write(
            args.out.join(format!("metrics_{condition}.json")),
            serde_json::to_string_pretty(&report).expect("report serializes"),
        )
        .context("write metrics json")
        .map_err(CliError::Domain)?;
        fs::write(
            args.out.join(format!("confusion_{condition}.csv")),
            cm.to_csv(),
        )
        .context("write confusion csv")
        .map_err(CliError::Domain)?;
        summary.insert(condition.clone(), report);
    }
    if args.json {
        let compact: BTreeMap<&String, serde_json::Value> = summary
            .iter()
            .map(|(k, r)| {
                (
                    k,
                    json!({"macro_f1": r.macro_f1, "uar": r.uar, "war": r.war}),
                )
            })
            .collect();
        println!("{}", json!({ "out": args.out, "conditions": compact }));
    } else {
        for (condition, r) in &summary {
            println!(
                "{condition}: macro_f1={:.4} uar={:.4} war={:.4}",
                r.macro_f1, r.uar, r.war
            );
        }
    }
    Ok(())
}

fn series_from_freq_csv(path: &Path) -> Result<Series, CliError> {
    require_file(path, "frequency csv")?;
    let text = fs::read_to_string(path)
        .with_context(|| format!("read '{}'", path.display()))
        .map_err(CliError::Domain)?;
    let mut values = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (label, freq) = line
            .split_once(',')
            .ok_or_else(|| domain(anyhow!("'{}' line {}: expected label,frequency", path.display(), i + 1)))?;
        match freq.trim().parse::<f64>() {
            Ok(v) => {
                values.insert(normalize_label(label), v);
            }
            Err(e) if i == 0 => {
                // tolerate a header row
                let _ = e;
            }
            Err(e) => {
                return Err(domain(anyhow!(
                    "'{}' line {}: bad frequency: {e}",
                    path.display(),
                    i + 1
                )));
            }
        }
    }
    Ok(Series::new(stem_of(path), values))
}

fn series_from_f1_json(path: &Path) -> Result<Series, CliError> {
    require_file(path, "metrics json")?;
    let text = fs::read_to_string(path)
        .with_context(|| format!("read '{}'", path.display()))
        .map_err(CliError::Domain)?;
    let report: MetricsReport = serde_json::from_str(&text)
        .map_err(|e| domain(anyhow!("'{}' is not a metrics JSON export: {e}", path.display())))?;
    Ok(Series::new(
        stem_of(path),
        report
            .per_class
            .iter()
            .map(|c| (c.label.clone(), c.f1))
            .collect(),
    ))
}

fn stem_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.to_string_lossy().into_owned())
}

fn cmd_correlate(args: CorrelateArgs) -> CliResult {
    let mut series = Vec::new();
    for path in &args.freq_csv {
        series.push(series_from_freq_csv(path)?);
    }
    for path in &args.f1_json {
        series.push(series_from_f1_json(path)?);
    }
    if series.len() < 2 {
        return Err(usage(
            "need at least 2 series (from --freq-csv / --f1-json) to correlate",
        ));
    }
    let matrix = correlation_matrix(&series).map_err(domain)?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .with_context(|| format!("create '{}'", parent.display()))
                .map_err(CliError::Domain)?;
        }
    }
    fs::write(&args.out, matrix.to_csv())
        .with_context(|| format!("write '{}'", args.out.display()))
        .map_err(CliError::Domain)?;
    if let Some(json_path) = &args.out_json {
        fs::write(
            json_path,
            serde_json::to_string_pretty(&matrix).expect("matrix serializes"),
        )
        .with_context(|| format!("write '{}'", json_path.display()))
        .map_err(CliError::Domain)?;
    }
    if args.json {
        println!("{}", serde_json::to_string(&matrix).expect("serializes"));
    } else {
        print!("{}", matrix.to_csv());
    }
    Ok(())
}

fn cmd_report(args: ReportArgs) -> CliResult {
    require_file(&args.record, "record file")?;
    let text = fs::read_to_string(&args.record)
        .with_context(|| format!("read '{}'", args.record.display()))
        .map_err(CliError::Domain)?;
    let record: RunRecord = serde_json::from_str(&text)
        .map_err(|e| domain(anyhow!("'{}' is not a run record: {e}", args.record.display())))?;
    let written = runner::emit_reports(&record, &args.out).map_err(domain)?;
    if args.json {
        println!("{}", json!({ "out": args.out, "files": written }));
    } else {
        for path in written {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn cmd_mock_serve(args: MockServeArgs) -> CliResult {
    require_file(&args.script, "mock script")?;
    let script = MockScript::load(&args.script).map_err(|e| usage(e))?;
    let rt = tokio::runtime::Runtime::new()
        .context("start async runtime")
        .map_err(CliError::Domain)?;
    rt.block_on(async move {
        let (addr, serve_future) = serve::bind(script, args.addr)
            .await
            .map_err(|e| domain(anyhow!("bind {}: {e}", args.addr)))?;
        println!("listening on http://{addr}");
        tokio::select! {
            result = serve_future => result.map_err(|e| domain(anyhow!("server: {e}"))),
            _ = tokio::signal::ctrl_c() => Ok(()),
        }
    })
}
