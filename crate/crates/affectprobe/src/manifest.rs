//! Dataset manifests: label taxonomies, labeled video samples, JSONL
//! ingestion, and seeded balanced test/train splits.
//!
//! A manifest file is JSON Lines, one object per line with required keys
//! `id`, `source`, `label` and optional `native_fps`, `frame_count`.
//! Records missing the optional keys are probed (frame directories by
//! counting frame files, video files through a configurable probe command),
//! and saved manifests always carry all keys populated.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read '{path}': {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed record: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: unknown label '{label}' for taxonomy '{taxonomy}'")]
    UnknownLabel {
        line: usize,
        label: String,
        taxonomy: String,
    },
    #[error("line {line}: duplicate sample id '{id}'")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: {msg}")]
    InvalidField { line: usize, msg: String },
    #[error("sample '{id}': {msg}")]
    Probe { id: String, msg: String },
    #[error("invalid taxonomy: {0}")]
    InvalidTaxonomy(String),
    #[error("insufficient samples: {0}")]
    InsufficientClass(ClassShortfall),
}

/// Classes that cannot supply `per_class` samples, with their actual counts.
#[derive(Debug, Clone)]
pub struct ClassShortfall(pub Vec<(String, usize, usize)>);

impl fmt::Display for ClassShortfall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|(label, have, need)| format!("'{label}' has {have}, need {need}"))
            .collect();
        write!(f, "{}", parts.join("; "))
    }
}

/// Normalize a label: lowercase, trim, collapse internal whitespace runs.
pub fn normalize_label(raw: &str) -> String {
    raw.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// An ordered set of class labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelTaxonomy {
    pub name: String,
    pub labels: Vec<String>,
}

impl LabelTaxonomy {
    pub fn new<S: Into<String>>(
        name: impl Into<String>,
        labels: impl IntoIterator<Item = S>,
    ) -> Result<Self, ManifestError> {
        let labels: Vec<String> = labels
            .into_iter()
            .map(|l| normalize_label(&l.into()))
            .collect();
        if labels.is_empty() {
            return Err(ManifestError::InvalidTaxonomy("no labels".into()));
        }
        let mut seen = BTreeSet::new();
        for l in &labels {
            if l.is_empty() {
                return Err(ManifestError::InvalidTaxonomy("empty label".into()));
            }
            if l.chars().any(|c| c == ',' || c.is_control()) {
                return Err(ManifestError::InvalidTaxonomy(format!(
                    "label '{l}' contains a comma or control character"
                )));
            }
            if !seen.insert(l.clone()) {
                return Err(ManifestError::InvalidTaxonomy(format!(
                    "duplicate label '{l}' after normalization"
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            labels,
        })
    }

    /// The 11 MAFW emotion classes.
    pub fn mafw() -> Self {
        Self::new(
            "mafw",
            [
                "anger",
                "anxiety",
                "contempt",
                "disappointment",
                "disgust",
                "fear",
                "happiness",
                "helplessness",
                "neutral",
                "sadness",
                "surprise",
            ],
        )
        .expect("built-in taxonomy is valid")
    }

    /// The 7 DFEW emotion classes.
    pub fn dfew() -> Self {
        Self::new(
            "dfew",
            ["angry", "disgust", "fear", "happy", "neutral", "sad", "surprise"],
        )
        .expect("built-in taxonomy is valid")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index_of(label).is_some()
    }
}

/// A labeled video with frame-count and native-fps metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSample {
    pub id: String,
    pub source: PathBuf,
    pub label: String,
    pub native_fps: f64,
    pub frame_count: u32,
}

impl VideoSample {
    pub fn duration_s(&self) -> f64 {
        self.frame_count as f64 / self.native_fps
    }
}

/// One JSONL record. `native_fps` and `frame_count` may be absent on input
/// and are filled by probing; saved manifests always carry them.
#[derive(Debug, Serialize, Deserialize)]
struct ManifestRecord {
    id: String,
    source: String,
    label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    native_fps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    frame_count: Option<u32>,
}

/// A collection of samples under one taxonomy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub taxonomy: LabelTaxonomy,
    pub samples: Vec<VideoSample>,
    pub split_tag: Option<String>,
}

/// Seeded balanced-split parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub per_class: usize,
    pub seed: u64,
    pub purpose: SplitPurpose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitPurpose {
    Test,
    Train,
}

impl SplitPurpose {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitPurpose::Test => "test",
            SplitPurpose::Train => "train",
        }
    }
}

impl DatasetManifest {
    pub fn new(taxonomy: LabelTaxonomy) -> Self {
        Self {
            taxonomy,
            samples: Vec::new(),
            split_tag: None,
        }
    }

    /// Load a JSONL manifest, probing metadata with the default prober
    /// (frame-file counting only; no external decoder).
    pub fn load(path: impl AsRef<Path>, taxonomy: &LabelTaxonomy) -> Result<Self, ManifestError> {
        Self::load_with_prober(path, taxonomy, &FrameProber::default())
    }

    pub fn load_with_prober(
        path: impl AsRef<Path>,
        taxonomy: &LabelTaxonomy,
        prober: &FrameProber,
    ) -> Result<Self, ManifestError> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let reader = BufReader::new(file);

        let mut samples = Vec::new();
        let mut seen_ids = BTreeSet::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|source| ManifestError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ManifestRecord =
                serde_json::from_str(&line).map_err(|e| ManifestError::Parse {
                    line: line_no,
                    msg: e.to_string(),
                })?;
            let label = normalize_label(&record.label);
            if !taxonomy.contains(&label) {
                return Err(ManifestError::UnknownLabel {
                    line: line_no,
                    label,
                    taxonomy: taxonomy.name.clone(),
                });
            }
            if record.id.is_empty() {
                return Err(ManifestError::InvalidField {
                    line: line_no,
                    msg: "empty id".into(),
                });
            }
            if !seen_ids.insert(record.id.clone()) {
                return Err(ManifestError::DuplicateId {
                    line: line_no,
                    id: record.id,
                });
            }
            let source = PathBuf::from(&record.source);
            let (native_fps, frame_count) =
                prober.resolve(&record.id, &source, record.native_fps, record.frame_count)?;
            if native_fps <= 0.0 || !native_fps.is_finite() {
                return Err(ManifestError::InvalidField {
                    line: line_no,
                    msg: format!("native_fps must be positive, got {native_fps}"),
                });
            }
            if frame_count == 0 {
                return Err(ManifestError::InvalidField {
                    line: line_no,
                    msg: "frame_count must be >= 1".into(),
                });
            }
            samples.push(VideoSample {
                id: record.id,
                source,
                label,
                native_fps,
                frame_count,
            });
        }
        Ok(Self {
            taxonomy: taxonomy.clone(),
            samples,
            split_tag: None,
        })
    }

    /// Write as normalized JSONL (all optional keys populated).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ManifestError> {
        let path = path.as_ref();
        let mut out = fs::File::create(path).map_err(|source| ManifestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        for s in &self.samples {
            let record = ManifestRecord {
                id: s.id.clone(),
                source: s.source.to_string_lossy().into_owned(),
                label: s.label.clone(),
                native_fps: Some(s.native_fps),
                frame_count: Some(s.frame_count),
            };
            let line = serde_json::to_string(&record).expect("record serializes");
            writeln!(out, "{line}").map_err(|source| ManifestError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&VideoSample> {
        self.samples.iter().find(|s| s.id == id)
    }

    /// Per-label sample counts; every taxonomy label is present, possibly 0.
    pub fn class_histogram(&self) -> BTreeMap<String, u64> {
        let mut hist: BTreeMap<String, u64> = self
            .taxonomy
            .labels
            .iter()
            .map(|l| (l.clone(), 0))
            .collect();
        for s in &self.samples {
            *hist.get_mut(&s.label).expect("label in taxonomy") += 1;
        }
        hist
    }

    /// Seeded balanced split: exactly `per_class` samples of every class in
    /// `selected`, the rest (in manifest order) in `remainder`.
    ///
    /// Classes are processed in taxonomy order; within a class the samples
    /// are sorted by id and Fisher-Yates-shuffled with a single ChaCha8
    /// stream keyed from `spec.seed` (see [`crate::rng`] for the pinned
    /// constants), then the first `per_class` are taken in shuffle order.
    pub fn balanced_split(
        &self,
        spec: &SplitSpec,
    ) -> Result<(DatasetManifest, DatasetManifest), ManifestError> {
        if spec.per_class == 0 {
            return Err(ManifestError::InvalidTaxonomy(
                "per_class must be >= 1".into(),
            ));
        }
        let hist = self.class_histogram();
        let shortfall: Vec<(String, usize, usize)> = self
            .taxonomy
            .labels
            .iter()
            .filter_map(|l| {
                let have = hist[l] as usize;
                (have < spec.per_class).then(|| (l.clone(), have, spec.per_class))
            })
            .collect();
        if !shortfall.is_empty() {
            return Err(ManifestError::InsufficientClass(ClassShortfall(shortfall)));
        }

        let mut rng_stream = rng::rng_from_seed(spec.seed);
        let mut selected_ids: BTreeSet<String> = BTreeSet::new();
        let mut selected_samples = Vec::with_capacity(spec.per_class * self.taxonomy.len());
        for label in &self.taxonomy.labels {
            let mut class_samples: Vec<&VideoSample> =
                self.samples.iter().filter(|s| &s.label == label).collect();
            class_samples.sort_by(|a, b| a.id.cmp(&b.id));
            rng::fisher_yates(&mut class_samples, &mut rng_stream);
            for s in class_samples.into_iter().take(spec.per_class) {
                selected_ids.insert(s.id.clone());
                selected_samples.push(s.clone());
            }
        }
        let remainder_samples: Vec<VideoSample> = self
            .samples
            .iter()
            .filter(|s| !selected_ids.contains(&s.id))
            .cloned()
            .collect();

        let selected = DatasetManifest {
            taxonomy: self.taxonomy.clone(),
            samples: selected_samples,
            split_tag: Some(spec.purpose.as_str().to_string()),
        };
        let remainder = DatasetManifest {
            taxonomy: self.taxonomy.clone(),
            samples: remainder_samples,
            split_tag: Some("remainder".to_string()),
        };
        Ok((selected, remainder))
    }
}

/// Fills in missing `native_fps` / `frame_count` metadata.
///
/// Frame directories are probed by counting frame files. Video files need a
/// probe command template (placeholder `{input}`) whose stdout contains
/// `key=value` lines; recognized keys are `nb_read_frames`/`frame_count`
/// and `avg_frame_rate`/`fps` (rational `num/den` or decimal).
#[derive(Debug, Clone, Default)]
pub struct FrameProber {
    pub probe_command: Option<String>,
}

impl FrameProber {
    pub fn with_command(template: impl Into<String>) -> Self {
        Self {
            probe_command: Some(template.into()),
        }
    }

    fn resolve(
        &self,
        id: &str,
        source: &Path,
        native_fps: Option<f64>,
        frame_count: Option<u32>,
    ) -> Result<(f64, u32), ManifestError> {
        if let (Some(fps), Some(count)) = (native_fps, frame_count) {
            return Ok((fps, count));
        }
        if source.is_dir() {
            let count = match frame_count {
                Some(c) => c,
                None => count_frame_files(source).map_err(|msg| ManifestError::Probe {
                    id: id.to_string(),
                    msg,
                })?,
            };
            let fps = native_fps.ok_or_else(|| ManifestError::Probe {
                id: id.to_string(),
                msg: "frame-directory source needs native_fps in the manifest".into(),
            })?;
            return Ok((fps, count));
        }
        let (probed_fps, probed_count) = self.probe_video(id, source)?;
        Ok((
            native_fps.or(probed_fps).ok_or_else(|| ManifestError::Probe {
                id: id.to_string(),
                msg: "probe did not report fps".into(),
            })?,
            frame_count
                .or(probed_count)
                .ok_or_else(|| ManifestError::Probe {
                    id: id.to_string(),
                    msg: "probe did not report frame count".into(),
                })?,
        ))
    }

    fn probe_video(
        &self,
        id: &str,
        source: &Path,
    ) -> Result<(Option<f64>, Option<u32>), ManifestError> {
        let template = self.probe_command.as_ref().ok_or_else(|| ManifestError::Probe {
            id: id.to_string(),
            msg: format!(
                "'{}' is not a directory and no probe command is configured",
                source.display()
            ),
        })?;
        let cmd = template.replace("{input}", &source.to_string_lossy());
        let parts = shell_words(&cmd);
        if parts.is_empty() {
            return Err(ManifestError::Probe {
                id: id.to_string(),
                msg: "empty probe command".into(),
            });
        }
        let output = Command::new(&parts[0])
            .args(&parts[1..])
            .output()
            .map_err(|e| ManifestError::Probe {
                id: id.to_string(),
                msg: format!("probe spawn failed: {e}"),
            })?;
        if !output.status.success() {
            return Err(ManifestError::Probe {
                id: id.to_string(),
                msg: format!(
                    "probe exited with {}: {}",
                    output.status,
                    String::from_utf8_lossy(&output.stderr).trim()
                ),
            });
        }
        let stdout = String::from_utf8_lossy(&output.stdout);
        let mut fps = None;
        let mut count = None;
        for line in stdout.lines() {
            let Some((key, value)) = line.trim().split_once('=') else {
                continue;
            };
            match key.trim() {
                "avg_frame_rate" | "fps" => fps = parse_fps(value.trim()),
                "nb_read_frames" | "frame_count" => count = value.trim().parse::<u32>().ok(),
                _ => {}
            }
        }
        Ok((fps, count))
    }
}

fn parse_fps(value: &str) -> Option<f64> {
    if let Some((num, den)) = value.split_once('/') {
        let num: f64 = num.trim().parse().ok()?;
        let den: f64 = den.trim().parse().ok()?;
        (den != 0.0).then(|| num / den)
    } else {
        value.parse().ok()
    }
}

fn count_frame_files(dir: &Path) -> Result<u32, String> {
    let entries = fs::read_dir(dir).map_err(|e| format!("read_dir: {e}"))?;
    let mut count = 0u32;
    for entry in entries {
        let entry = entry.map_err(|e| format!("read_dir entry: {e}"))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if name.ends_with(".jpg") || name.ends_with(".jpeg") || name.ends_with(".png") {
            count += 1;
        }
    }
    if count == 0 {
        return Err(format!("no frame files in '{}'", dir.display()));
    }
    Ok(count)
}

// Minimal whitespace tokenizer for command templates; quoting is not
// supported, paths with spaces need a wrapper script.
fn shell_words(cmd: &str) -> Vec<String> {
    cmd.split_whitespace().map(|s| s.to_string()).collect()
}
