//! Deterministic scripted mock backend.
//!
//! A script is a JSON file with ordered rules; the first rule whose match
//! conditions all hold wins. Conditions: `text_contains` (substring over the
//! newline-joined text parts), `image_digests` (every listed hex SHA-256
//! present among the request's image payload digests, order-agnostic) and
//! `first_image_digest` (digest of the first image part, order-sensitive).
//! A rule with no `match` block always fires. The response is a pure
//! function of the request.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Part;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockScript {
    pub rules: Vec<MockRule>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(rename = "match", default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<MockMatch>,
    pub respond: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MockMatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_digests: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_image_digest: Option<String>,
}

impl MockScript {
    pub fn new(rules: Vec<MockRule>) -> Self {
        Self { rules }
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let bytes =
            fs::read(path).map_err(|e| format!("read mock script '{}': {e}", path.display()))?;
        serde_json::from_slice(&bytes)
            .map_err(|e| format!("parse mock script '{}': {e}", path.display()))
    }

    pub fn save(&self, path: &Path) -> Result<(), String> {
        let json = serde_json::to_string_pretty(self).expect("script serializes");
        fs::write(path, json).map_err(|e| format!("write '{}': {e}", path.display()))
    }

    /// First-match-wins evaluation; `None` when no rule matches.
    pub fn respond(&self, parts: &[Part]) -> Option<String> {
        let text: String = parts
            .iter()
            .filter_map(|p| match p {
                Part::Text(t) => Some(t.as_str()),
                Part::Image(_) => None,
            })
            .collect::<Vec<_>>()
            .join("\n");
        let digests: Vec<String> = parts
            .iter()
            .filter_map(|p| match p {
                Part::Image(img) => Some(img.payload_digest()),
                Part::Text(_) => None,
            })
            .collect();
        let digest_set: BTreeSet<&str> = digests.iter().map(|s| s.as_str()).collect();

        for rule in &self.rules {
            let Some(cond) = &rule.condition else {
                return Some(rule.respond.clone());
            };
            if let Some(needle) = &cond.text_contains {
                if !text.contains(needle.as_str()) {
                    continue;
                }
            }
            if let Some(required) = &cond.image_digests {
                if !required.iter().all(|d| digest_set.contains(d.as_str())) {
                    continue;
                }
            }
            if let Some(first) = &cond.first_image_digest {
                if digests.first() != Some(first) {
                    continue;
                }
            }
            return Some(rule.respond.clone());
        }
        None
    }
}
