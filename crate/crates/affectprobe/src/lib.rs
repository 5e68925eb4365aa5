//! Diagnostics harness and inference pipeline for video emotion recognition.
//!
//! The crate is organized around a small set of composable pieces:
//!
//! - [`manifest`] — dataset manifests, label taxonomies, seeded balanced splits
//! - [`sampler`] — frame-index plans (uniform FPS, keyframe/gap plans) and
//!   frame materialization from directories or video files
//! - [`perturb`] — seeded input perturbations (frame-order shuffling)
//! - [`gateway`] — delivery of interleaved image/text requests to a multimodal
//!   chat backend (HTTP or scripted mock) with caching, retries and rate limits
//! - [`msce`] — the two-stage enrichment classifier (gap summarization, then
//!   interleaved classification) and the sparse-sampling baseline
//! - [`metrics`] — confusion matrices, per-class precision/recall/F1, UAR/WAR
//! - [`correlation`] — Pearson r and two-tailed t-test p-values over per-class
//!   series (lexical frequency vs. per-class F1)
//! - [`runner`] — experiment grid execution with resumable, cache-backed runs

pub mod correlation;
pub mod gateway;
pub mod manifest;
pub mod metrics;
pub mod msce;
pub mod perturb;
pub mod rng;
pub mod runner;
pub mod sampler;

pub use manifest::{DatasetManifest, LabelTaxonomy, SplitSpec, VideoSample};
pub use metrics::{ConfusionMatrix, MetricsReport};
pub use sampler::{FrameIndexPlan, ImageRef, MscePlan};
