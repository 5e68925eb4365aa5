//! Two-stage enriched-context classification and the sparse-sampling
//! baseline.
//!
//! Stage 1 turns each keyframe gap's interior frames into a short motion
//! summary (one backend call per non-empty gap; empty gaps get a sentinel
//! without a call). Stage 2 sends the keyframes interleaved with those
//! summaries in chronological order, wrapped in a fixed prompt template, and
//! parses the response into a taxonomy label. The baseline skips stage 1 and
//! sends keyframes with the question and label list only.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ChatRequest, DecodeParams, Gateway, GatewayError, Part};
use crate::manifest::{LabelTaxonomy, VideoSample};
use crate::perturb::{self, Perturbation};
use crate::sampler::{FrameIndexPlan, ImageRef, Materializer, MscePlan, SamplerError};

/// Header line of the stage-2 prompt.
pub const STAGE2_HEADER: &str = "Analyze the following sequence of sparse keyframes and the detailed motion descriptions for the gaps between them.";

/// Default stage-1 instruction (configurable per run).
pub const DEFAULT_STAGE1_PROMPT: &str = "Describe, in one or two sentences, the facial muscle movements and any micro-expressions visible across these consecutive frames.";

/// Default classification question (configurable per run).
pub const DEFAULT_QUESTION: &str = "What is the emotion expressed by the person in the video?";

/// Summary text recorded for a gap with no interior frames.
pub const EMPTY_GAP_SENTINEL: &str = "No intermediate motion observed.";

/// Default cap on summary length, in characters.
pub const DEFAULT_SUMMARY_CHAR_BUDGET: usize = 400;

#[derive(Debug, Error)]
pub enum MsceError {
    #[error("expected {expected} summaries for {keyframes} keyframes, got {got}")]
    CountMismatch {
        keyframes: usize,
        expected: usize,
        got: usize,
    },
    #[error("bundle images out of chronological order at position {0}")]
    Chronology(usize),
    #[error("empty keyframe list")]
    NoKeyframes,
    #[error("stage 1 failed on gap {gap_index}: {source}")]
    Stage1 {
        gap_index: usize,
        #[source]
        source: GatewayError,
    },
    #[error("stage 2 failed: {0}")]
    Stage2(#[source] GatewayError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

/// Natural-language description of the motion inside one keyframe gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionSummary {
    /// 1-based gap position, between keyframes `gap_index` and `gap_index+1`.
    pub gap_index: usize,
    pub text: String,
    pub source_frames: Vec<u32>,
}

/// The assembled stage-2 request body: images and text segments in
/// chronological order, wrapped by the template header and question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub parts: Vec<Part>,
}

impl PromptBundle {
    pub fn image_count(&self) -> usize {
        self.parts
            .iter()
            .filter(|p| matches!(p, Part::Image(_)))
            .count()
    }

    /// Text skeleton with every image rendered as `<image>`; the golden-file
    /// representation.
    pub fn transcript(&self) -> String {
        let mut out = String::new();
        for part in &self.parts {
            match part {
                Part::Text(t) => out.push_str(t),
                Part::Image(_) => out.push_str("<image>"),
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Baseline,
    Msce,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Msce => "msce",
        }
    }
}

/// Outcome of classifying one sample. An unparseable response is recorded,
/// not fatal; it scores as a misclassification downstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub sample_id: String,
    pub mode: Mode,
    pub predicted: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<String>,
    pub raw_text: String,
    pub plan_digest: String,
}

/// A classification plus presentation metadata for the run record.
///
/// `presented_indices` is set when a shuffle perturbation changed the order
/// frames were transmitted in; the result's `plan_digest` always hashes the
/// chronological plan so perturbed and normal conditions pair up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOutcome {
    pub result: ClassificationResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub presented_indices: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_sizes: Option<Vec<usize>>,
}

/// Label-parse failure cases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParseFailure {
    NoMatch,
    Ambiguous(Vec<String>),
}

impl std::fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParseFailure::NoMatch => write!(f, "no_match"),
            ParseFailure::Ambiguous(labels) => write!(f, "ambiguous: {}", labels.join(", ")),
        }
    }
}

/// `true` when `word` occurs in `text` bounded by non-alphanumerics.
fn contains_whole_word(text: &str, word: &str) -> bool {
    let mut start = 0;
    while let Some(pos) = text[start..].find(word) {
        let abs = start + pos;
        let before_ok = abs == 0
            || !text[..abs]
                .chars()
                .next_back()
                .is_some_and(|c| c.is_alphanumeric());
        let end = abs + word.len();
        let after_ok = end == text.len()
            || !text[end..].chars().next().is_some_and(|c| c.is_alphanumeric());
        if before_ok && after_ok {
            return true;
        }
        start = abs + 1;
    }
    false
}

/// Extract the predicted taxonomy label from a raw response.
///
/// The response is lowercased and scanned for taxonomy labels as whole
/// words. Exactly one distinct label wins; with several, a trailing
/// `answer:`-style segment disambiguates if it names exactly one.
pub fn parse_label(raw: &str, taxonomy: &LabelTaxonomy) -> Result<String, ParseFailure> {
    let lower = raw.to_lowercase();
    let found: Vec<&String> = taxonomy
        .labels
        .iter()
        .filter(|l| contains_whole_word(&lower, l))
        .collect();
    match found.len() {
        0 => Err(ParseFailure::NoMatch),
        1 => Ok(found[0].clone()),
        _ => {
            if let Some(pos) = lower.rfind("answer") {
                let tail = &lower[pos..];
                let tail_found: Vec<&&String> = found
                    .iter()
                    .filter(|l| contains_whole_word(tail, l))
                    .collect();
                if tail_found.len() == 1 {
                    return Ok(tail_found[0].to_string());
                }
            }
            Err(ParseFailure::Ambiguous(
                found.into_iter().cloned().collect(),
            ))
        }
    }
}

/// Stage-2 interleaved prompt assembly.
///
/// Byte layout: the header line, then `FrameID i:` + image + `, Motion:{t_i},`
/// for every gap, the final `FrameID n:` + image, then `Question: {question}`
/// and `Emotion Labels choices: {labels}` on their own lines.
pub fn assemble_interleaved_prompt(
    keyframes: &[ImageRef],
    summaries: &[MotionSummary],
    question: &str,
    taxonomy: &LabelTaxonomy,
) -> Result<PromptBundle, MsceError> {
    if keyframes.is_empty() {
        return Err(MsceError::NoKeyframes);
    }
    if summaries.len() != keyframes.len() - 1 {
        return Err(MsceError::CountMismatch {
            keyframes: keyframes.len(),
            expected: keyframes.len() - 1,
            got: summaries.len(),
        });
    }
    for (i, pair) in keyframes.windows(2).enumerate() {
        if pair[0].frame_index >= pair[1].frame_index {
            return Err(MsceError::Chronology(i + 1));
        }
    }

    let n = keyframes.len();
    let mut parts = Vec::with_capacity(2 * n + 1);
    parts.push(Part::text(format!("{STAGE2_HEADER}\nFrameID 1:")));
    parts.push(Part::Image(keyframes[0].clone()));
    for (i, summary) in summaries.iter().enumerate() {
        parts.push(Part::text(format!(
            ", Motion:{}, FrameID {}:",
            summary.text,
            i + 2
        )));
        parts.push(Part::Image(keyframes[i + 1].clone()));
    }
    parts.push(Part::text(format!(
        "\nQuestion: {question}\nEmotion Labels choices: {}",
        taxonomy.labels.join(", ")
    )));

    let bundle = PromptBundle { parts };
    debug_assert_eq!(bundle.image_count(), n);
    Ok(bundle)
}

/// Baseline request body: keyframe images, then the question and label list.
pub fn assemble_baseline_prompt(
    keyframes: &[ImageRef],
    question: &str,
    taxonomy: &LabelTaxonomy,
) -> Result<PromptBundle, MsceError> {
    if keyframes.is_empty() {
        return Err(MsceError::NoKeyframes);
    }
    let mut parts: Vec<Part> = keyframes.iter().cloned().map(Part::Image).collect();
    parts.push(Part::text(format!(
        "Question: {question}\nEmotion Labels choices: {}",
        taxonomy.labels.join(", ")
    )));
    Ok(PromptBundle { parts })
}

/// Pipeline options shared across samples in a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub stage1_prompt: String,
    pub question: String,
    pub summary_char_budget: usize,
    pub decode: DecodeParams,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            stage1_prompt: DEFAULT_STAGE1_PROMPT.to_string(),
            question: DEFAULT_QUESTION.to_string(),
            summary_char_budget: DEFAULT_SUMMARY_CHAR_BUDGET,
            decode: DecodeParams::default(),
        }
    }
}

/// Classifier over one backend pair. Stage 1 and stage 2 may share a
/// gateway or use distinct ones.
pub struct MscePipeline {
    pub stage1: Arc<Gateway>,
    pub stage2: Arc<Gateway>,
    pub materializer: Arc<Materializer>,
    pub options: PipelineOptions,
}

impl MscePipeline {
    pub fn single_backend(
        gateway: Arc<Gateway>,
        materializer: Arc<Materializer>,
        options: PipelineOptions,
    ) -> Self {
        Self {
            stage1: gateway.clone(),
            stage2: gateway,
            materializer,
            options,
        }
    }

    /// Summarize one gap's frames. Empty gaps return the sentinel summary
    /// without touching the backend.
    pub async fn summarize_gap(
        &self,
        gap_index: usize,
        frames: &[ImageRef],
    ) -> Result<MotionSummary, MsceError> {
        if frames.is_empty() {
            return Ok(MotionSummary {
                gap_index,
                text: EMPTY_GAP_SENTINEL.to_string(),
                source_frames: Vec::new(),
            });
        }
        let mut parts = Vec::with_capacity(frames.len() + 1);
        parts.push(Part::text(self.options.stage1_prompt.clone()));
        parts.extend(frames.iter().cloned().map(Part::Image));
        let request = ChatRequest {
            model_id: self.stage1.model_id().to_string(),
            parts,
            decode: self.options.decode,
        };
        let response = self
            .stage1
            .send(&request)
            .await
            .map_err(|source| MsceError::Stage1 { gap_index, source })?;
        let mut text: String = response.text.trim().to_string();
        if text.chars().count() > self.options.summary_char_budget {
            text = text.chars().take(self.options.summary_char_budget).collect();
        }
        if text.is_empty() {
            text = EMPTY_GAP_SENTINEL.to_string();
        }
        Ok(MotionSummary {
            gap_index,
            text,
            source_frames: frames.iter().map(|f| f.frame_index).collect(),
        })
    }

    /// Baseline classification: keyframes plus question, one backend call.
    ///
    /// `perturbation` (when non-identity) reorders frame presentation with a
    /// per-sample derived seed; the recorded plan digest stays chronological.
    pub async fn classify_baseline(
        &self,
        sample: &VideoSample,
        plan: &FrameIndexPlan,
        taxonomy: &LabelTaxonomy,
        perturbation: Option<&Perturbation>,
    ) -> Result<ClassifyOutcome, MsceError> {
        let (order, presented) = match perturbation {
            Some(p) if !p.is_identity() => {
                let permuted = perturb::apply(plan, &p.for_sample(&sample.id));
                (permuted.indices.clone(), Some(permuted.indices))
            }
            _ => (plan.indices.clone(), None),
        };
        let images = self.materializer.materialize(sample, &order)?;
        let bundle = assemble_baseline_prompt(&images, &self.options.question, taxonomy)?;
        let request = ChatRequest {
            model_id: self.stage2.model_id().to_string(),
            parts: bundle.parts,
            decode: self.options.decode,
        };
        let response = self.stage2.send(&request).await.map_err(MsceError::Stage2)?;
        Ok(ClassifyOutcome {
            result: finish(sample, Mode::Baseline, response.text, plan.digest(), taxonomy),
            presented_indices: presented,
            gap_sizes: None,
        })
    }

    /// Full two-stage classification. Gap summaries run concurrently; stage 2
    /// waits for all of them. `gap_perturbation` (when set) shuffles the
    /// presentation order of each gap's frames with a seed derived per
    /// (sample, gap); the stage-2 interleave is always chronological.
    pub async fn classify_msce(
        &self,
        sample: &VideoSample,
        plan: &MscePlan,
        taxonomy: &LabelTaxonomy,
        gap_perturbation: Option<&Perturbation>,
    ) -> Result<ClassifyOutcome, MsceError> {
        let keyframes = self.materializer.materialize(sample, &plan.keyframes)?;

        let summary_futures = plan.gaps.iter().enumerate().map(|(j, gap)| {
            let gap_index = j + 1;
            let order: Vec<u32> = match gap_perturbation {
                Some(p) if !p.is_identity() && gap.len() > 1 => {
                    let gap_plan =
                        FrameIndexPlan::new(&plan.sample_id, gap.clone(), 0.0).expect("gap sorted");
                    let tag = format!("{}#gap{}", plan.sample_id, gap_index);
                    perturb::apply(&gap_plan, &p.for_sample(&tag)).indices
                }
                _ => gap.clone(),
            };
            async move {
                let frames = if order.is_empty() {
                    Vec::new()
                } else {
                    self.materializer.materialize(sample, &order)?
                };
                self.summarize_gap(gap_index, &frames).await
            }
        });
        let summaries = futures::future::try_join_all(summary_futures).await?;

        let bundle =
            assemble_interleaved_prompt(&keyframes, &summaries, &self.options.question, taxonomy)?;
        let request = ChatRequest {
            model_id: self.stage2.model_id().to_string(),
            parts: bundle.parts,
            decode: self.options.decode,
        };
        let response = self.stage2.send(&request).await.map_err(MsceError::Stage2)?;
        Ok(ClassifyOutcome {
            result: finish(sample, Mode::Msce, response.text, plan.digest(), taxonomy),
            presented_indices: None,
            gap_sizes: Some(plan.gap_sizes()),
        })
    }
}

fn finish(
    sample: &VideoSample,
    mode: Mode,
    raw_text: String,
    plan_digest: String,
    taxonomy: &LabelTaxonomy,
) -> ClassificationResult {
    let (predicted, parse_error) = match parse_label(&raw_text, taxonomy) {
        Ok(label) => (Some(label), None),
        Err(failure) => (None, Some(failure.to_string())),
    };
    ClassificationResult {
        sample_id: sample.id.clone(),
        mode,
        predicted,
        parse_error,
        raw_text,
        plan_digest,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::mock::{MockMatch, MockRule, MockScript};
    use crate::gateway::BackendConfig;
    use crate::sampler::{frame_file_path, uniform_fps_indices, EncodePolicy};
    use std::path::Path;

    fn tax() -> LabelTaxonomy {
        LabelTaxonomy::new("t", ["anger", "happiness", "neutral", "sadness", "surprise"]).unwrap()
    }

    fn image(idx: u32) -> ImageRef {
        ImageRef {
            sample_id: "v".into(),
            frame_index: idx,
            payload: vec![idx as u8 + 1],
        }
    }

    fn summary(j: usize, text: &str) -> MotionSummary {
        MotionSummary {
            gap_index: j,
            text: text.into(),
            source_frames: vec![],
        }
    }

    #[test]
    fn parse_single_label() {
        assert_eq!(
            parse_label("The emotion is Happiness.", &tax()).unwrap(),
            "happiness"
        );
    }

    #[test]
    fn parse_two_labels_is_ambiguous() {
        let err = parse_label("Could be sadness or anger", &tax()).unwrap_err();
        assert!(matches!(err, ParseFailure::Ambiguous(v) if v.len() == 2));
    }

    #[test]
    fn parse_substring_is_not_whole_word() {
        // "joyful" has no label; "angered" must not match "anger"
        assert_eq!(parse_label("joyful", &tax()).unwrap_err(), ParseFailure::NoMatch);
        assert_eq!(
            parse_label("the person seems angered", &tax()).unwrap_err(),
            ParseFailure::NoMatch
        );
    }

    #[test]
    fn parse_answer_segment_disambiguates() {
        let raw = "It may look like sadness at first. Answer: anger";
        assert_eq!(parse_label(raw, &tax()).unwrap(), "anger");
    }

    #[test]
    fn parse_punctuation_bounds_words() {
        assert_eq!(parse_label("anger!", &tax()).unwrap(), "anger");
        assert_eq!(parse_label("(surprise)", &tax()).unwrap(), "surprise");
    }

    #[test]
    fn interleaved_bundle_structure_n3() {
        let keyframes = [image(0), image(25), image(50)];
        let summaries = [summary(1, "t1"), summary(2, "t2")];
        let bundle =
            assemble_interleaved_prompt(&keyframes, &summaries, DEFAULT_QUESTION, &tax()).unwrap();
        assert_eq!(bundle.parts.len(), 7);
        assert_eq!(bundle.image_count(), 3);
        match &bundle.parts[0] {
            Part::Text(t) => {
                assert!(t.starts_with(STAGE2_HEADER));
                assert!(t.ends_with("FrameID 1:"));
            }
            _ => panic!("part 0 must be text"),
        }
        match &bundle.parts[2] {
            Part::Text(t) => assert_eq!(t, ", Motion:t1, FrameID 2:"),
            _ => panic!("part 2 must be text"),
        }
        match &bundle.parts[6] {
            Part::Text(t) => {
                assert!(t.starts_with("\nQuestion: "));
                assert!(t.contains("Emotion Labels choices: anger, happiness, neutral"));
            }
            _ => panic!("final part must be text"),
        }
    }

    #[test]
    fn minimal_bundle_n2() {
        let bundle = assemble_interleaved_prompt(
            &[image(0), image(10)],
            &[summary(1, "still")],
            "q",
            &tax(),
        )
        .unwrap();
        assert_eq!(bundle.image_count(), 2);
        let motions = bundle
            .parts
            .iter()
            .filter(|p| matches!(p, Part::Text(t) if t.contains(", Motion:")))
            .count();
        assert_eq!(motions, 1);
    }

    #[test]
    fn count_mismatch_rejected() {
        let err = assemble_interleaved_prompt(&[image(0), image(10)], &[], "q", &tax()).unwrap_err();
        assert!(matches!(
            err,
            MsceError::CountMismatch {
                keyframes: 2,
                expected: 1,
                got: 0
            }
        ));
    }

    #[test]
    fn chronology_enforced() {
        let err = assemble_interleaved_prompt(
            &[image(10), image(0)],
            &[summary(1, "x")],
            "q",
            &tax(),
        )
        .unwrap_err();
        assert!(matches!(err, MsceError::Chronology(1)));
    }

    #[test]
    fn transcript_matches_golden_fixture() {
        let keyframes = [image(0), image(25), image(50)];
        let summaries = [
            summary(1, "eyebrows raise briefly then relax"),
            summary(2, "lips tighten into a faint smile"),
        ];
        let bundle = assemble_interleaved_prompt(
            &keyframes,
            &summaries,
            DEFAULT_QUESTION,
            &LabelTaxonomy::mafw(),
        )
        .unwrap();
        let golden = include_str!("../tests/golden/stage2_prompt.txt");
        assert_eq!(bundle.transcript(), golden);
    }

    // -- pipeline composition against the in-process mock --

    fn write_frames(dir: &Path, count: u32) {
        for i in 0..count {
            let img = image::RgbImage::from_pixel(4, 4, image::Rgb([i as u8, 7, 9]));
            img.save(frame_file_path(dir, i)).unwrap();
        }
    }

    fn pipeline_with_script(
        dir: &Path,
        script: MockScript,
    ) -> (MscePipeline, Arc<Gateway>) {
        let script_path = dir.join("rules.json");
        script.save(&script_path).unwrap();
        let cfg = BackendConfig::mock(&script_path, "mock-model");
        let gateway = Arc::new(Gateway::new(&cfg, &dir.join("cache")).unwrap());
        let pipeline = MscePipeline::single_backend(
            gateway.clone(),
            Arc::new(Materializer {
                decoder_command: None,
                encode: EncodePolicy::default(),
            }),
            PipelineOptions::default(),
        );
        (pipeline, gateway)
    }

    fn sample_at(dir: &Path, frame_count: u32) -> VideoSample {
        VideoSample {
            id: "v1".into(),
            source: dir.to_path_buf(),
            label: "surprise".into(),
            native_fps: 25.0,
            frame_count,
        }
    }

    #[tokio::test]
    async fn empty_gap_uses_sentinel_without_backend_call() {
        let dir = tempfile::tempdir().unwrap();
        let (pipeline, gateway) = pipeline_with_script(
            dir.path(),
            MockScript::new(vec![MockRule {
                condition: None,
                respond: "x".into(),
            }]),
        );
        let got = pipeline.summarize_gap(1, &[]).await.unwrap();
        assert_eq!(got.text, EMPTY_GAP_SENTINEL);
        assert_eq!(gateway.dispatched(), 0);
    }

    #[tokio::test]
    async fn scripted_summary_text_comes_back() {
        let dir = tempfile::tempdir().unwrap();
        write_frames(dir.path(), 4);
        let (pipeline, _) = pipeline_with_script(
            dir.path(),
            MockScript::new(vec![MockRule {
                condition: Some(MockMatch {
                    text_contains: Some("micro-expressions".into()),
                    ..Default::default()
                }),
                respond: "eyebrows raise briefly then relax".into(),
            }]),
        );
        let sample = sample_at(dir.path(), 4);
        let frames = pipeline
            .materializer
            .materialize(&sample, &[0, 1, 2, 3])
            .unwrap();
        let got = pipeline.summarize_gap(1, &frames).await.unwrap();
        assert_eq!(got.text, "eyebrows raise briefly then relax");
        assert_eq!(got.source_frames, vec![0, 1, 2, 3]);
    }

    #[tokio::test]
    async fn msce_composition_and_call_accounting() {
        let dir = tempfile::tempdir().unwrap();
        // 5 seconds at 25 fps -> keyframes [0,25,50,75,100], 4 gaps of 4.
        write_frames(dir.path(), 125);
        let (pipeline, gateway) = pipeline_with_script(
            dir.path(),
            MockScript::new(vec![
                MockRule {
                    condition: Some(MockMatch {
                        text_contains: Some("micro-expressions".into()),
                        ..Default::default()
                    }),
                    respond: "eyebrows raise briefly".into(),
                },
                MockRule {
                    condition: Some(MockMatch {
                        text_contains: Some("eyebrows raise".into()),
                        ..Default::default()
                    }),
                    respond: "surprise".into(),
                },
            ]),
        );
        let sample = sample_at(dir.path(), 125);
        let keyframes = uniform_fps_indices(25.0, 125, 1.0, "v1").unwrap();
        let plan = crate::sampler::msce_plan(&keyframes, 4).unwrap();
        assert_eq!(plan.non_empty_gaps(), 4);

        let outcome = pipeline
            .classify_msce(&sample, &plan, &tax(), None)
            .await
            .unwrap();
        assert_eq!(outcome.result.predicted.as_deref(), Some("surprise"));
        assert_eq!(outcome.result.mode, Mode::Msce);
        assert_eq!(outcome.gap_sizes.as_deref(), Some(&[4, 4, 4, 4][..]));
        // (n-1) summaries + 1 classification
        assert_eq!(gateway.dispatched(), 5);
    }

    #[tokio::test]
    async fn baseline_single_call() {
        let dir = tempfile::tempdir().unwrap();
        write_frames(dir.path(), 50);
        let (pipeline, gateway) = pipeline_with_script(
            dir.path(),
            MockScript::new(vec![MockRule {
                condition: Some(MockMatch {
                    text_contains: Some("Question:".into()),
                    ..Default::default()
                }),
                respond: "neutral".into(),
            }]),
        );
        let sample = sample_at(dir.path(), 50);
        let plan = uniform_fps_indices(25.0, 50, 1.0, "v1").unwrap();
        let outcome = pipeline
            .classify_baseline(&sample, &plan, &tax(), None)
            .await
            .unwrap();
        assert_eq!(outcome.result.predicted.as_deref(), Some("neutral"));
        assert_eq!(outcome.result.mode, Mode::Baseline);
        assert!(outcome.presented_indices.is_none());
        assert_eq!(gateway.dispatched(), 1);
    }

    #[tokio::test]
    async fn summary_truncated_at_char_budget() {
        let dir = tempfile::tempdir().unwrap();
        write_frames(dir.path(), 2);
        let long = "m".repeat(1000);
        let (mut pipeline, _) = pipeline_with_script(
            dir.path(),
            MockScript::new(vec![MockRule {
                condition: None,
                respond: long,
            }]),
        );
        pipeline.options.summary_char_budget = 10;
        let sample = sample_at(dir.path(), 2);
        let frames = pipeline.materializer.materialize(&sample, &[0]).unwrap();
        let got = pipeline.summarize_gap(1, &frames).await.unwrap();
        assert_eq!(got.text.chars().count(), 10);
    }
}
