//! Experiment grid execution: baseline, frame-shuffled, FPS-sweep and
//! enriched-context conditions over one manifest, with cache-backed
//! resumability and report emission.
//!
//! Sampling plans are computed once per (sample, fps) and shared by the
//! normal and shuffled conditions of a pair, so order comparisons see
//! identical visual information (same plan digest). All randomness comes
//! from seeds in the config snapshot. Results are written in (condition,
//! manifest) order, which makes warm-cache reruns byte-identical.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::gateway::{BackendConfig, DecodeParams, Gateway};
use crate::manifest::{DatasetManifest, FrameProber, LabelTaxonomy};
use crate::metrics::{ConfusionMatrix, MetricsReport};
use crate::msce::{
    ClassificationResult, ClassifyOutcome, Mode, MscePipeline, PipelineOptions,
};
use crate::perturb::Perturbation;
use crate::sampler::{msce_plan, uniform_fps_indices, EncodePolicy, Materializer};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("config invalid: {0}")]
    Config(String),
    #[error("manifest: {0}")]
    Manifest(#[from] crate::manifest::ManifestError),
    #[error("gateway: {0}")]
    Gateway(#[from] crate::gateway::GatewayError),
    #[error("metrics: {0}")]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error("io error on '{path}': {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("record has no conditions; nothing to report")]
    EmptyRecord,
}

/// Taxonomy selector: a built-in name (`mafw`, `dfew`) or a path to a JSON
/// file with `{"name": ..., "labels": [...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaxonomySpec(pub String);

impl TaxonomySpec {
    pub fn resolve(&self) -> Result<LabelTaxonomy, RunnerError> {
        match self.0.as_str() {
            "mafw" => Ok(LabelTaxonomy::mafw()),
            "dfew" => Ok(LabelTaxonomy::dfew()),
            path => {
                let bytes = fs::read(path).map_err(|e| {
                    RunnerError::Config(format!("taxonomy '{path}' is not built-in and not readable: {e}"))
                })?;
                serde_json::from_slice(&bytes)
                    .map_err(|e| RunnerError::Config(format!("taxonomy file '{path}': {e}")))
            }
        }
    }
}

/// The canonical sweep used when a config says `target_fps = "sweep"`.
pub const DEFAULT_SWEEP: [f64; 6] = [1.0, 5.0, 10.0, 15.0, 20.0, 25.0];

/// A single rate, an explicit sweep list, or the named default sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FpsSpec {
    One(f64),
    Sweep(Vec<f64>),
    Named(String),
}

impl Default for FpsSpec {
    fn default() -> Self {
        FpsSpec::One(1.0)
    }
}

impl FpsSpec {
    pub fn list(&self) -> Vec<f64> {
        match self {
            FpsSpec::One(v) => vec![*v],
            FpsSpec::Sweep(v) => v.clone(),
            FpsSpec::Named(_) => DEFAULT_SWEEP.to_vec(),
        }
    }

    pub fn is_sweep(&self) -> bool {
        matches!(self, FpsSpec::Sweep(_) | FpsSpec::Named(_))
    }
}

fn default_m() -> usize {
    4
}

fn default_version() -> u32 {
    1
}

/// Run configuration; the serialized TOML form is versioned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_version")]
    pub config_version: u32,
    pub manifest: PathBuf,
    pub taxonomy: TaxonomySpec,
    pub mode: Mode,
    #[serde(default)]
    pub target_fps: FpsSpec,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default)]
    pub perturbation: Perturbation,
    pub output_dir: PathBuf,
    /// Shared response cache; defaults to `{output_dir}/cache`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage1_prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary_char_budget: Option<usize>,
    pub backend: BackendConfig,
    /// Distinct stage-1 backend; stage 2 uses `backend`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage1_backend: Option<BackendConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decode: Option<DecodeParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encode: Option<EncodePolicy>,
    /// External decoder template for video-file sources
    /// (`{input} {index} {output}` placeholders).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decoder_command: Option<String>,
    /// Metadata probe template for video-file sources (`{input}`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_command: Option<String>,
    /// Concurrent samples in flight; defaults to the backend parallelism.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worker_parallelism: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, RunnerError> {
        let text = fs::read_to_string(path).map_err(|source| RunnerError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| RunnerError::Config(format!("parse '{}': {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        if self.config_version != 1 {
            return Err(RunnerError::Config(format!(
                "unsupported config_version {}",
                self.config_version
            )));
        }
        if let FpsSpec::Named(name) = &self.target_fps {
            if name != "sweep" {
                return Err(RunnerError::Config(format!(
                    "target_fps must be a number, a list, or \"sweep\", got \"{name}\""
                )));
            }
        }
        let fps = self.target_fps.list();
        if fps.is_empty() {
            return Err(RunnerError::Config("target_fps sweep list is empty".into()));
        }
        if fps.iter().any(|&v| v <= 0.0 || !v.is_finite()) {
            return Err(RunnerError::Config("target_fps values must be positive".into()));
        }
        if self.m == 0 {
            return Err(RunnerError::Config("m must be >= 1".into()));
        }
        Ok(())
    }

    /// Deterministic run id: first 12 hex chars of the SHA-256 of the
    /// canonical config JSON.
    pub fn run_id(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))[..12].to_string()
    }

    fn pipeline_options(&self) -> PipelineOptions {
        let mut options = PipelineOptions::default();
        if let Some(q) = &self.question {
            options.question = q.clone();
        }
        if let Some(p) = &self.stage1_prompt {
            options.stage1_prompt = p.clone();
        }
        if let Some(b) = self.summary_char_budget {
            options.summary_char_budget = b;
        }
        if let Some(d) = self.decode {
            options.decode = d;
        }
        options
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir
            .clone()
            .unwrap_or_else(|| self.output_dir.join("cache"))
    }
}

/// One experimental condition: a sampling rate, optionally frame-shuffled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    pub target_fps: f64,
    pub perturbed: bool,
}

fn fps_tag(fps: f64) -> String {
    if fps.fract() == 0.0 {
        format!("{}", fps as u64)
    } else {
        format!("{fps}")
    }
}

/// Expand a config into its condition list: one per fps, doubled into a
/// {normal, shuffled} pair when a shuffle perturbation is configured.
pub fn conditions_of(config: &ExperimentConfig) -> Vec<Condition> {
    let mut out = Vec::new();
    for fps in config.target_fps.list() {
        out.push(Condition {
            name: format!("fps{}", fps_tag(fps)),
            target_fps: fps,
            perturbed: false,
        });
        if !config.perturbation.is_identity() {
            out.push(Condition {
                name: format!("fps{}_fs", fps_tag(fps)),
                target_fps: fps,
                perturbed: true,
            });
        }
    }
    out
}

/// One line of `results.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub condition: String,
    pub truth: String,
    #[serde(flatten)]
    pub result: ClassificationResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub presented_indices: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_sizes: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub sample_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConditionRecord {
    pub condition: Condition,
    pub metrics: MetricsReport,
    pub confusion: ConfusionMatrix,
    /// Transport-level failures, excluded from metrics (distinct from
    /// unparseable responses, which are scored).
    pub failures: Vec<FailureRecord>,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct UsageTotals {
    pub dispatched: u64,
    pub cache_hits: u64,
}

/// Everything a finished run produced, minus the raw result rows (those
/// live in `results.jsonl`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    pub tool_version: String,
    pub started_at: String,
    pub finished_at: String,
    pub config: ExperimentConfig,
    pub conditions: Vec<ConditionRecord>,
    pub usage: UsageTotals,
}

/// A completed run: the record plus ordered result rows.
pub struct RunOutput {
    pub record: RunRecord,
    pub rows: Vec<ResultRow>,
    pub run_dir: PathBuf,
}

/// Execute the run and write all artifacts under `{output_dir}/{run_id}/`.
pub async fn run(config: &ExperimentConfig) -> Result<RunOutput, RunnerError> {
    config.validate()?;
    let taxonomy = config.taxonomy.resolve()?;
    let prober = FrameProber {
        probe_command: config.probe_command.clone(),
    };
    let manifest = DatasetManifest::load_with_prober(&config.manifest, &taxonomy, &prober)?;
    let started_at = chrono::Utc::now().to_rfc3339();

    let cache_dir = config.cache_dir();
    let stage2_gateway = Arc::new(Gateway::new(&config.backend, &cache_dir)?);
    let stage1_gateway = match &config.stage1_backend {
        Some(cfg) => Arc::new(Gateway::new(cfg, &cache_dir)?),
        None => stage2_gateway.clone(),
    };
    let materializer = Arc::new(Materializer {
        decoder_command: config.decoder_command.clone(),
        encode: config.encode.clone().unwrap_or_default(),
    });
    let pipeline = Arc::new(MscePipeline {
        stage1: stage1_gateway.clone(),
        stage2: stage2_gateway.clone(),
        materializer,
        options: config.pipeline_options(),
    });

    let worker_width = config
        .worker_parallelism
        .unwrap_or(config.backend.parallelism)
        .max(1);

    let run_dir = config.output_dir.join(config.run_id());
    fs::create_dir_all(&run_dir).map_err(|source| RunnerError::Io {
        path: run_dir.clone(),
        source,
    })?;

    let mut rows: Vec<ResultRow> = Vec::new();
    let mut condition_records: Vec<ConditionRecord> = Vec::new();

    for condition in conditions_of(config) {
        let perturbation = condition.perturbed.then_some(&config.perturbation);
        let tasks = manifest.samples.iter().enumerate().map(|(idx, sample)| {
            let pipeline = pipeline.clone();
            let taxonomy = taxonomy.clone();
            let condition = condition.clone();
            let mode = config.mode;
            let m = config.m;
            let perturbation = perturbation.cloned();
            async move {
                let outcome: Result<ClassifyOutcome, String> = async {
                    let keyframes = uniform_fps_indices(
                        sample.native_fps,
                        sample.frame_count,
                        condition.target_fps,
                        &sample.id,
                    )
                    .map_err(|e| e.to_string())?;
                    match mode {
                        Mode::Baseline => pipeline
                            .classify_baseline(
                                sample,
                                &keyframes,
                                &taxonomy,
                                perturbation.as_ref(),
                            )
                            .await
                            .map_err(|e| e.to_string()),
                        Mode::Msce => {
                            let plan =
                                msce_plan(&keyframes, m).map_err(|e| e.to_string())?;
                            pipeline
                                .classify_msce(sample, &plan, &taxonomy, perturbation.as_ref())
                                .await
                                .map_err(|e| e.to_string())
                        }
                    }
                }
                .await;
                (idx, outcome)
            }
        });

        let mut results: Vec<(usize, Result<ClassifyOutcome, String>)> = stream::iter(tasks)
            .buffer_unordered(worker_width)
            .collect()
            .await;
        results.sort_by_key(|(idx, _)| *idx);

        let mut confusion = ConfusionMatrix::new(taxonomy.clone());
        let mut failures = Vec::new();
        for (idx, outcome) in results {
            let sample = &manifest.samples[idx];
            match outcome {
                Ok(outcome) => {
                    confusion
                        .accumulate(&sample.label, outcome.result.predicted.as_deref())?;
                    rows.push(ResultRow {
                        condition: condition.name.clone(),
                        truth: sample.label.clone(),
                        result: outcome.result,
                        presented_indices: outcome.presented_indices,
                        gap_sizes: outcome.gap_sizes,
                    });
                }
                Err(error) => failures.push(FailureRecord {
                    sample_id: sample.id.clone(),
                    error,
                }),
            }
        }
        debug_assert_eq!(
            confusion.total() as usize + failures.len(),
            manifest.len(),
            "conservation: every sample accounted for"
        );
        let metrics = confusion.report()?;
        condition_records.push(ConditionRecord {
            condition,
            metrics,
            confusion,
            failures,
        });
    }

    let record = RunRecord {
        run_id: config.run_id(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        started_at,
        finished_at: chrono::Utc::now().to_rfc3339(),
        config: config.clone(),
        conditions: condition_records,
        usage: UsageTotals {
            dispatched: stage1_gateway.dispatched()
                + if config.stage1_backend.is_some() {
                    stage2_gateway.dispatched()
                } else {
                    0
                },
            cache_hits: stage1_gateway.cache_hits()
                + if config.stage1_backend.is_some() {
                    stage2_gateway.cache_hits()
                } else {
                    0
                },
        },
    };

    write_results(&run_dir, &rows)?;
    let record_json =
        serde_json::to_string_pretty(&record).expect("record serializes");
    write_file(&run_dir.join("record.json"), record_json.as_bytes())?;
    emit_reports(&record, &run_dir)?;

    Ok(RunOutput {
        record,
        rows,
        run_dir,
    })
}

fn write_results(run_dir: &Path, rows: &[ResultRow]) -> Result<(), RunnerError> {
    let mut body = String::new();
    for row in rows {
        body.push_str(&serde_json::to_string(row).expect("row serializes"));
        body.push('\n');
    }
    write_file(&run_dir.join("results.jsonl"), body.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), RunnerError> {
    fs::write(path, bytes).map_err(|source| RunnerError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Write metrics/confusion CSVs per condition, the fps curve when the run
/// swept rates, and the shuffle delta table when pairs exist.
pub fn emit_reports(record: &RunRecord, output_dir: &Path) -> Result<Vec<PathBuf>, RunnerError> {
    if record.conditions.is_empty() {
        return Err(RunnerError::EmptyRecord);
    }
    fs::create_dir_all(output_dir).map_err(|source| RunnerError::Io {
        path: output_dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    for cond in &record.conditions {
        let metrics_csv = output_dir.join(format!("metrics_{}.csv", cond.condition.name));
        write_file(&metrics_csv, cond.metrics.to_csv().as_bytes())?;
        written.push(metrics_csv);

        let metrics_json = output_dir.join(format!("metrics_{}.json", cond.condition.name));
        write_file(
            &metrics_json,
            serde_json::to_string_pretty(&cond.metrics)
                .expect("metrics serialize")
                .as_bytes(),
        )?;
        written.push(metrics_json);

        let confusion_csv = output_dir.join(format!("confusion_{}.csv", cond.condition.name));
        write_file(&confusion_csv, cond.confusion.to_csv().as_bytes())?;
        written.push(confusion_csv);
    }

    if record.config.target_fps.is_sweep() {
        let mut body = String::from("fps,macro_f1\n");
        for cond in &record.conditions {
            if !cond.condition.perturbed {
                body.push_str(&format!(
                    "{},{:.6}\n",
                    fps_tag(cond.condition.target_fps),
                    cond.metrics.macro_f1
                ));
            }
        }
        let path = output_dir.join("fps_curve.csv");
        write_file(&path, body.as_bytes())?;
        written.push(path);
    }

    let pairs: Vec<(&ConditionRecord, &ConditionRecord)> = record
        .conditions
        .iter()
        .filter(|c| !c.condition.perturbed)
        .filter_map(|normal| {
            record
                .conditions
                .iter()
                .find(|fs| {
                    fs.condition.perturbed
                        && fs.condition.target_fps == normal.condition.target_fps
                })
                .map(|fs| (normal, fs))
        })
        .collect();
    if !pairs.is_empty() {
        let mut body = String::from("fps,macro_f1_normal,macro_f1_fs,delta\n");
        for (normal, shuffled) in pairs {
            body.push_str(&format!(
                "{},{:.6},{:.6},{:.6}\n",
                fps_tag(normal.condition.target_fps),
                normal.metrics.macro_f1,
                shuffled.metrics.macro_f1,
                normal.metrics.macro_f1 - shuffled.metrics.macro_f1
            ));
        }
        let path = output_dir.join("fs_delta.csv");
        write_file(&path, body.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

/// Rebuild per-condition confusion matrices from result rows (the `metrics`
/// subcommand path: rows carry truth labels).
pub fn confusions_from_rows(
    rows: &[ResultRow],
    taxonomy: &LabelTaxonomy,
) -> Result<BTreeMap<String, ConfusionMatrix>, RunnerError> {
    let mut by_condition: BTreeMap<String, ConfusionMatrix> = BTreeMap::new();
    for row in rows {
        let cm = by_condition
            .entry(row.condition.clone())
            .or_insert_with(|| ConfusionMatrix::new(taxonomy.clone()));
        cm.accumulate(&row.truth, row.result.predicted.as_deref())?;
    }
    Ok(by_condition)
}

/// Parse a `results.jsonl` file.
pub fn load_rows(path: &Path) -> Result<Vec<ResultRow>, RunnerError> {
    let text = fs::read_to_string(path).map_err(|source| RunnerError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        rows.push(
            serde_json::from_str(line)
                .map_err(|e| RunnerError::Config(format!("results line {}: {e}", i + 1)))?,
        );
    }
    Ok(rows)
}
