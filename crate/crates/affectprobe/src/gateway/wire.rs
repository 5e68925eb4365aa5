//! OpenAI-compatible chat-completions JSON shapes, shared by the HTTP
//! client and the local mock server.
//!
//! Requests carry a single user message whose `content` array interleaves
//! `text` and `image_url` parts in request order; images travel as base64
//! data URLs. Responses surface `choices[0].message.content` plus optional
//! token usage.

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use super::{ChatRequest, GatewayError, Part, Usage};
use crate::sampler::ImageRef;

#[derive(Debug, Serialize, Deserialize)]
pub struct WireChatRequest {
    pub model: String,
    pub messages: Vec<WireMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WireMessage {
    pub role: String,
    pub content: Vec<WireContentPart>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WireContentPart {
    Text { text: String },
    ImageUrl { image_url: WireImageUrl },
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WireImageUrl {
    pub url: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WireChatResponse {
    pub id: Option<String>,
    pub choices: Vec<WireChoice>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<WireUsage>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WireChoice {
    pub index: u32,
    pub message: WireResponseMessage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finish_reason: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WireResponseMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WireUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

fn media_type(payload: &[u8]) -> &'static str {
    if payload.starts_with(&[0x89, b'P', b'N', b'G']) {
        "image/png"
    } else {
        "image/jpeg"
    }
}

pub fn request_to_wire(request: &ChatRequest) -> WireChatRequest {
    let content = request
        .parts
        .iter()
        .map(|part| match part {
            Part::Text(t) => WireContentPart::Text { text: t.clone() },
            Part::Image(img) => WireContentPart::ImageUrl {
                image_url: WireImageUrl {
                    url: format!(
                        "data:{};base64,{}",
                        media_type(&img.payload),
                        BASE64.encode(&img.payload)
                    ),
                },
            },
        })
        .collect();
    WireChatRequest {
        model: request.model_id.clone(),
        messages: vec![WireMessage {
            role: "user".to_string(),
            content,
        }],
        temperature: request.decode.temperature,
        max_tokens: request.decode.max_tokens,
    }
}

/// Rebuild internal parts from a wire request (server side).
pub fn parts_from_wire(request: &WireChatRequest) -> Result<Vec<Part>, String> {
    let mut parts = Vec::new();
    let mut image_no = 0u32;
    for message in &request.messages {
        for part in &message.content {
            match part {
                WireContentPart::Text { text } => parts.push(Part::Text(text.clone())),
                WireContentPart::ImageUrl { image_url } => {
                    let encoded = image_url
                        .url
                        .split_once(";base64,")
                        .map(|(_, rest)| rest)
                        .ok_or_else(|| "image_url is not a base64 data URL".to_string())?;
                    let payload = BASE64
                        .decode(encoded)
                        .map_err(|e| format!("invalid base64 image payload: {e}"))?;
                    parts.push(Part::Image(ImageRef {
                        sample_id: "wire".to_string(),
                        frame_index: image_no,
                        payload,
                    }));
                    image_no += 1;
                }
            }
        }
    }
    Ok(parts)
}

pub fn response_from_wire(
    response: WireChatResponse,
) -> Result<(String, Option<Usage>), GatewayError> {
    let choice = response
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| GatewayError::MalformedResponse("no choices in response".into()))?;
    let usage = response.usage.map(|u| Usage {
        prompt_tokens: u.prompt_tokens,
        completion_tokens: u.completion_tokens,
    });
    Ok((choice.message.content, usage))
}

pub fn wire_response_for(text: String) -> WireChatResponse {
    WireChatResponse {
        id: Some("mock-0".to_string()),
        choices: vec![WireChoice {
            index: 0,
            message: WireResponseMessage {
                role: "assistant".to_string(),
                content: text,
            },
            finish_reason: Some("stop".to_string()),
        }],
        usage: None,
    }
}
