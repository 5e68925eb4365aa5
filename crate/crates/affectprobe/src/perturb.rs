//! Input perturbations applied to sampling plans before inference.
//!
//! The only non-identity perturbation is a seeded frame-order shuffle: the
//! index multiset is preserved, only presentation order changes, and the
//! resulting plan is flagged `permuted`. A seed may legitimately produce the
//! identity permutation; callers that need a guaranteed reorder set
//! `redraw_until_changed`, which retries with `seed+1, seed+2, ...` until
//! the order differs.

use serde::{Deserialize, Serialize};

use crate::rng;
use crate::sampler::FrameIndexPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Perturbation {
    Identity(IdentityTag),
    Shuffle {
        shuffle: u64,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        redraw_until_changed: bool,
    },
}

/// Serialized form of the identity perturbation: the string `"identity"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IdentityTag {
    #[serde(rename = "identity")]
    Identity,
}

impl Default for Perturbation {
    fn default() -> Self {
        Perturbation::Identity(IdentityTag::Identity)
    }
}

impl Perturbation {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn shuffle(seed: u64) -> Self {
        Perturbation::Shuffle {
            shuffle: seed,
            redraw_until_changed: false,
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, Perturbation::Identity(_))
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Perturbation::Identity(_) => None,
            Perturbation::Shuffle { shuffle, .. } => Some(*shuffle),
        }
    }

    /// Derive a per-sample variant so each video gets its own permutation
    /// under one configured seed.
    pub fn for_sample(&self, sample_id: &str) -> Perturbation {
        match *self {
            Perturbation::Identity(_) => *self,
            Perturbation::Shuffle {
                shuffle,
                redraw_until_changed,
            } => Perturbation::Shuffle {
                shuffle: rng::derive_seed(shuffle, sample_id),
                redraw_until_changed,
            },
        }
    }
}

/// Apply a perturbation to a plan's presentation order.
pub fn apply(plan: &FrameIndexPlan, p: &Perturbation) -> FrameIndexPlan {
    match *p {
        Perturbation::Identity(_) => plan.clone(),
        Perturbation::Shuffle {
            shuffle,
            redraw_until_changed,
        } => {
            let mut seed = shuffle;
            let mut out = plan.clone();
            loop {
                let mut indices = plan.indices.clone();
                rng::fisher_yates(&mut indices, &mut rng::rng_from_seed(seed));
                let unchanged = indices == plan.indices;
                out.indices = indices;
                out.permuted = true;
                if !redraw_until_changed || !unchanged || plan.indices.len() < 2 {
                    return out;
                }
                seed = seed.wrapping_add(1);
            }
        }
    }
}
