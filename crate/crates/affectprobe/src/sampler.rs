//! Frame-index plans and frame materialization.
//!
//! Index arithmetic is pinned: frame positions use round-half-up, are
//! clamped to `frame_count - 1`, and duplicates are dropped order-preserving.
//! Uniform sampling at `target_fps` emits one index per tick `t` while
//! `t / target_fps` is still inside the clip. Keyframe/gap plans place up to
//! `m` interior indices per gap, uniformly spaced and exclusive of the
//! bounding keyframes; narrow gaps shrink silently.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::manifest::VideoSample;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("plan needs at least 2 keyframes to build gaps, got {0}")]
    TooFewKeyframes(usize),
    #[error("m must be >= 1")]
    InvalidM,
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("sample '{sample}': frame index {index} out of range (frame_count {frame_count})")]
    IndexOutOfRange {
        sample: String,
        index: u32,
        frame_count: u32,
    },
    #[error("sample '{sample}': missing frame file '{path}'")]
    MissingFrame { sample: String, path: PathBuf },
    #[error("sample '{sample}': decoder failed ({status}): {stderr}")]
    Decoder {
        sample: String,
        status: String,
        stderr: String,
    },
    #[error("sample '{sample}': {msg}")]
    Image { sample: String, msg: String },
    #[error("io error on '{path}': {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// An ordered set of frame indices for one sample.
///
/// `permuted` is false for chronological plans (indices strictly increasing);
/// it flips to true only when a shuffle perturbation reorders the list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameIndexPlan {
    pub sample_id: String,
    pub indices: Vec<u32>,
    pub target_fps: f64,
    #[serde(default)]
    pub permuted: bool,
}

impl FrameIndexPlan {
    /// A chronological plan; rejects empty or non-increasing index lists.
    pub fn new(
        sample_id: impl Into<String>,
        indices: Vec<u32>,
        target_fps: f64,
    ) -> Result<Self, SamplerError> {
        if indices.is_empty() {
            return Err(SamplerError::InvalidPlan("empty index list".into()));
        }
        if !indices.windows(2).all(|w| w[0] < w[1]) {
            return Err(SamplerError::InvalidPlan(
                "indices must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            sample_id: sample_id.into(),
            indices,
            target_fps,
            permuted: false,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Hex SHA-256 over the canonical JSON of the plan, used to pair
    /// perturbed and chronological conditions in run records.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("plan serializes");
        hex::encode(Sha256::digest(json))
    }
}

/// Keyframes plus per-gap interior index groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MscePlan {
    pub sample_id: String,
    pub keyframes: Vec<u32>,
    /// One group per gap between consecutive keyframes; groups may be empty.
    pub gaps: Vec<Vec<u32>>,
    pub m: usize,
}

impl MscePlan {
    pub fn keyframe_count(&self) -> usize {
        self.keyframes.len()
    }

    pub fn non_empty_gaps(&self) -> usize {
        self.gaps.iter().filter(|g| !g.is_empty()).count()
    }

    /// Effective interior count per gap (narrow gaps shrink below `m`).
    pub fn gap_sizes(&self) -> Vec<usize> {
        self.gaps.iter().map(|g| g.len()).collect()
    }

    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("plan serializes");
        hex::encode(Sha256::digest(json))
    }
}

/// Round half up; valid for the non-negative positions used here.
fn round_half_up(x: f64) -> u32 {
    (x + 0.5).floor() as u32
}

/// Uniform sampling at `target_fps` over a clip of `frame_count` frames
/// recorded at `native_fps`.
///
/// Index for tick `t` is `round(t * native_fps / target_fps)`, clamped and
/// deduplicated; ticks run while `t / target_fps` is inside the clip
/// duration. The first index is always 0.
pub fn uniform_fps_indices(
    native_fps: f64,
    frame_count: u32,
    target_fps: f64,
    sample_id: impl Into<String>,
) -> Result<FrameIndexPlan, SamplerError> {
    if native_fps <= 0.0 || target_fps <= 0.0 || frame_count == 0 {
        return Err(SamplerError::InvalidPlan(format!(
            "need native_fps > 0, target_fps > 0, frame_count >= 1, got ({native_fps}, {target_fps}, {frame_count})"
        )));
    }
    let mut indices = Vec::new();
    let mut t = 0u64;
    // t / target < frame_count / native  <=>  t * native < frame_count * target
    while (t as f64) * native_fps < frame_count as f64 * target_fps {
        let idx = round_half_up(t as f64 * native_fps / target_fps).min(frame_count - 1);
        if indices.last() != Some(&idx) {
            indices.push(idx);
        }
        t += 1;
    }
    FrameIndexPlan::new(sample_id, indices, target_fps)
}

/// Build a keyframe/gap plan from a chronological keyframe plan.
///
/// Gap `j` between keyframes `a = k_j` and `b = k_{j+1}` holds
/// `round(a + i * (b - a) / (m + 1))` for `i = 1..=m`, minus duplicates and
/// values equal to either bounding keyframe.
pub fn msce_plan(keyframes: &FrameIndexPlan, m: usize) -> Result<MscePlan, SamplerError> {
    if keyframes.permuted {
        return Err(SamplerError::InvalidPlan(
            "keyframe plan must be chronological".into(),
        ));
    }
    if keyframes.len() < 2 {
        return Err(SamplerError::TooFewKeyframes(keyframes.len()));
    }
    if m == 0 {
        return Err(SamplerError::InvalidM);
    }
    let mut gaps = Vec::with_capacity(keyframes.len() - 1);
    for pair in keyframes.indices.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let mut group = Vec::new();
        for i in 1..=m {
            let v = round_half_up(a as f64 + i as f64 * (b - a) as f64 / (m as f64 + 1.0));
            if v != a && v != b && group.last() != Some(&v) {
                group.push(v);
            }
        }
        gaps.push(group);
    }
    Ok(MscePlan {
        sample_id: keyframes.sample_id.clone(),
        keyframes: keyframes.indices.clone(),
        gaps,
        m,
    })
}

/// Encoded image bytes for one frame of one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRef {
    pub sample_id: String,
    pub frame_index: u32,
    /// Encoded image bytes (JPEG or PNG).
    #[serde(with = "payload_base64")]
    pub payload: Vec<u8>,
}

impl ImageRef {
    /// Hex SHA-256 of the payload bytes; the identity used by mock rules.
    pub fn payload_digest(&self) -> String {
        hex::encode(Sha256::digest(&self.payload))
    }
}

mod payload_base64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(de)?;
        STANDARD.decode(s).map_err(serde::de::Error::custom)
    }
}

/// How materialized frames are (re-)encoded before transmission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodePolicy {
    /// Re-encode every frame to JPEG. When false, file bytes pass through
    /// untouched (byte-stable, not validated as decodable).
    pub reencode: bool,
    pub jpeg_quality: u8,
    /// Longest side after downscaling; aspect ratio preserved.
    pub max_dim: u32,
}

impl Default for EncodePolicy {
    fn default() -> Self {
        Self {
            reencode: true,
            jpeg_quality: 90,
            max_dim: 448,
        }
    }
}

impl EncodePolicy {
    pub fn passthrough() -> Self {
        Self {
            reencode: false,
            jpeg_quality: 90,
            max_dim: 448,
        }
    }

    fn apply(&self, sample_id: &str, bytes: Vec<u8>) -> Result<Vec<u8>, SamplerError> {
        if !self.reencode {
            return Ok(bytes);
        }
        let img = image::load_from_memory(&bytes).map_err(|e| SamplerError::Image {
            sample: sample_id.to_string(),
            msg: format!("decode: {e}"),
        })?;
        let img = if img.width().max(img.height()) > self.max_dim {
            img.resize(
                self.max_dim,
                self.max_dim,
                image::imageops::FilterType::Triangle,
            )
        } else {
            img
        };
        let mut out = Vec::new();
        let encoder = image::codecs::jpeg::JpegEncoder::new_with_quality(
            Cursor::new(&mut out),
            self.jpeg_quality,
        );
        img.into_rgb8()
            .write_with_encoder(encoder)
            .map_err(|e| SamplerError::Image {
                sample: sample_id.to_string(),
                msg: format!("encode: {e}"),
            })?;
        Ok(out)
    }
}

/// Frame extraction configuration: frame-directory naming is `%06d.jpg`
/// (0-based); video files go through an external decoder command template
/// with `{input}`, `{index}` and `{output}` placeholders.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Materializer {
    pub decoder_command: Option<String>,
    pub encode: EncodePolicy,
}

impl Default for Materializer {
    fn default() -> Self {
        Self {
            decoder_command: None,
            encode: EncodePolicy::default(),
        }
    }
}

impl Materializer {
    pub fn with_decoder(template: impl Into<String>, encode: EncodePolicy) -> Self {
        Self {
            decoder_command: Some(template.into()),
            encode,
        }
    }

    /// Load image bytes for each index, in the order given.
    pub fn materialize(
        &self,
        sample: &VideoSample,
        indices: &[u32],
    ) -> Result<Vec<ImageRef>, SamplerError> {
        for &idx in indices {
            if idx >= sample.frame_count {
                return Err(SamplerError::IndexOutOfRange {
                    sample: sample.id.clone(),
                    index: idx,
                    frame_count: sample.frame_count,
                });
            }
        }
        let mut refs = Vec::with_capacity(indices.len());
        let is_dir = sample.source.is_dir();
        for &idx in indices {
            let raw = if is_dir {
                self.read_frame_file(sample, idx)?
            } else {
                self.decode_frame(sample, idx)?
            };
            refs.push(ImageRef {
                sample_id: sample.id.clone(),
                frame_index: idx,
                payload: self.encode.apply(&sample.id, raw)?,
            });
        }
        Ok(refs)
    }

    fn read_frame_file(&self, sample: &VideoSample, idx: u32) -> Result<Vec<u8>, SamplerError> {
        let path = frame_file_path(&sample.source, idx);
        if !path.is_file() {
            return Err(SamplerError::MissingFrame {
                sample: sample.id.clone(),
                path,
            });
        }
        fs::read(&path).map_err(|source| SamplerError::Io { path, source })
    }

    fn decode_frame(&self, sample: &VideoSample, idx: u32) -> Result<Vec<u8>, SamplerError> {
        let template = self
            .decoder_command
            .as_ref()
            .ok_or_else(|| SamplerError::Decoder {
                sample: sample.id.clone(),
                status: "unconfigured".into(),
                stderr: format!(
                    "'{}' is not a frame directory and no decoder command is configured",
                    sample.source.display()
                ),
            })?;
        let tmp = tempdir_for_decode().map_err(|source| SamplerError::Io {
            path: PathBuf::from("tmp"),
            source,
        })?;
        let output_path = tmp.join(format!("{}_{idx:06}.jpg", sanitize_id(&sample.id)));
        let cmd = template
            .replace("{input}", &sample.source.to_string_lossy())
            .replace("{index}", &idx.to_string())
            .replace("{output}", &output_path.to_string_lossy());
        let parts: Vec<&str> = cmd.split_whitespace().collect();
        let output = Command::new(parts[0])
            .args(&parts[1..])
            .output()
            .map_err(|e| SamplerError::Decoder {
                sample: sample.id.clone(),
                status: "spawn failed".into(),
                stderr: e.to_string(),
            })?;
        if !output.status.success() {
            return Err(SamplerError::Decoder {
                sample: sample.id.clone(),
                status: output.status.to_string(),
                stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
            });
        }
        let bytes = fs::read(&output_path).map_err(|source| SamplerError::Io {
            path: output_path.clone(),
            source,
        })?;
        let _ = fs::remove_file(&output_path);
        Ok(bytes)
    }
}

pub fn frame_file_path(dir: &Path, idx: u32) -> PathBuf {
    dir.join(format!("{idx:06}.jpg"))
}

fn tempdir_for_decode() -> std::io::Result<PathBuf> {
    let dir = std::env::temp_dir().join("affectprobe-decode");
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn sanitize_id(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}
