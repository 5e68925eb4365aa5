//! Delivery of interleaved image/text requests to a multimodal chat backend.
//!
//! A [`Gateway`] wraps one backend (an OpenAI-compatible HTTP endpoint or a
//! deterministic scripted mock) behind a persistent response cache, a
//! sliding-window rate limiter, an in-flight semaphore and retry with
//! exponential backoff. Identical requests hash to identical cache keys, so
//! warm-cache reruns perform zero network calls.

mod cache;
mod limiter;
pub mod mock;
pub mod serve;
pub mod wire;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tokio::sync::Semaphore;

use crate::sampler::ImageRef;
pub use cache::ResponseCache;
pub use limiter::RateLimiter;
pub use mock::MockScript;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("request has no parts")]
    EmptyRequest,
    #[error("image part for sample '{0}' frame {1} is not materialized")]
    UnmaterializedImage(String, u32),
    #[error("retries exhausted after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("backend rejected request ({status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("malformed response body: {0}")]
    MalformedResponse(String),
    #[error("no mock rule matched the request")]
    MockMiss,
    #[error("backend config invalid: {0}")]
    Config(String),
    #[error("cache error: {0}")]
    Cache(String),
    #[error("transport error: {0}")]
    Transport(String),
}

/// One element of the ordered request body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Text(String),
    Image(ImageRef),
}

impl Part {
    pub fn text(s: impl Into<String>) -> Self {
        Part::Text(s.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            max_tokens: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub parts: Vec<Part>,
    pub decode: DecodeParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub usage: Option<Usage>,
    pub latency_ms: u64,
    #[serde(skip)]
    pub cached: bool,
}

/// Backend selection plus transport knobs. One config maps to one shared
/// rate limiter and in-flight semaphore.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    /// `"http"` (OpenAI-compatible chat completions) or `"mock"`.
    pub kind: BackendKind,
    pub model_id: String,
    /// HTTP only: base URL; requests go to `{base_url}/chat/completions`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    /// HTTP only: environment variable holding the bearer token.
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    /// Mock only: path to the rule script.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// 0 disables rate limiting.
    #[serde(default)]
    pub requests_per_minute: u32,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_timeout_s")]
    pub timeout_s: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Http,
    Mock,
}

fn default_api_key_env() -> String {
    "AFFECTPROBE_API_KEY".to_string()
}

fn default_max_retries() -> u32 {
    3
}

fn default_parallelism() -> usize {
    4
}

fn default_timeout_s() -> u64 {
    120
}

impl BackendConfig {
    pub fn mock(script: impl Into<PathBuf>, model_id: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Mock,
            model_id: model_id.into(),
            base_url: None,
            api_key_env: default_api_key_env(),
            script: Some(script.into()),
            max_retries: default_max_retries(),
            requests_per_minute: 0,
            parallelism: default_parallelism(),
            timeout_s: default_timeout_s(),
        }
    }

    pub fn http(base_url: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self {
            kind: BackendKind::Http,
            model_id: model_id.into(),
            base_url: Some(base_url.into()),
            api_key_env: default_api_key_env(),
            script: None,
            max_retries: default_max_retries(),
            requests_per_minute: 0,
            parallelism: default_parallelism(),
            timeout_s: default_timeout_s(),
        }
    }
}

/// Stable 256-bit digest of a request: model id, decode params, and each
/// part in order (text verbatim, images by payload hash).
pub fn cache_key(request: &ChatRequest) -> Result<String, GatewayError> {
    if request.parts.is_empty() {
        return Err(GatewayError::EmptyRequest);
    }
    let mut hasher = Sha256::new();
    hasher.update(b"affectprobe.chatreq.v1\0");
    hasher.update(request.model_id.as_bytes());
    hasher.update([0u8]);
    hasher.update(request.decode.temperature.to_le_bytes());
    hasher.update(request.decode.max_tokens.to_le_bytes());
    for part in &request.parts {
        match part {
            Part::Text(t) => {
                hasher.update(b"T\0");
                hasher.update(t.as_bytes());
                hasher.update([0u8]);
            }
            Part::Image(img) => {
                if img.payload.is_empty() {
                    return Err(GatewayError::UnmaterializedImage(
                        img.sample_id.clone(),
                        img.frame_index,
                    ));
                }
                hasher.update(b"I\0");
                hasher.update(Sha256::digest(&img.payload));
                hasher.update([0u8]);
            }
        }
    }
    Ok(hex::encode(hasher.finalize()))
}

enum Transport {
    Http(HttpTransport),
    Mock(MockScript),
}

struct HttpTransport {
    client: reqwest::Client,
    endpoint: String,
    api_key: Option<String>,
}

/// Outcome of one dispatch attempt, split by retryability.
enum DispatchError {
    Retryable(String),
    Fatal(GatewayError),
}

/// One backend plus its cache, limits and counters.
pub struct Gateway {
    transport: Transport,
    model_id: String,
    cache: ResponseCache,
    limiter: Option<RateLimiter>,
    inflight: Arc<Semaphore>,
    max_retries: u32,
    backoff_base: Duration,
    dispatched: AtomicU64,
    cache_hits: AtomicU64,
}

impl Gateway {
    pub fn new(cfg: &BackendConfig, cache_dir: &Path) -> Result<Self, GatewayError> {
        if cfg.parallelism == 0 {
            return Err(GatewayError::Config("parallelism must be >= 1".into()));
        }
        let transport = match cfg.kind {
            BackendKind::Mock => {
                let script_path = cfg
                    .script
                    .as_ref()
                    .ok_or_else(|| GatewayError::Config("mock backend needs 'script'".into()))?;
                Transport::Mock(MockScript::load(script_path).map_err(GatewayError::Config)?)
            }
            BackendKind::Http => {
                let base = cfg
                    .base_url
                    .as_ref()
                    .ok_or_else(|| GatewayError::Config("http backend needs 'base_url'".into()))?;
                let client = reqwest::Client::builder()
                    .timeout(Duration::from_secs(cfg.timeout_s))
                    .connect_timeout(Duration::from_secs(10))
                    .build()
                    .map_err(|e| GatewayError::Config(e.to_string()))?;
                Transport::Http(HttpTransport {
                    client,
                    endpoint: format!("{}/chat/completions", base.trim_end_matches('/')),
                    api_key: std::env::var(&cfg.api_key_env).ok(),
                })
            }
        };
        let limiter = (cfg.requests_per_minute > 0)
            .then(|| RateLimiter::new(cfg.requests_per_minute, Duration::from_secs(60)));
        Ok(Self {
            transport,
            model_id: cfg.model_id.clone(),
            cache: ResponseCache::open(cache_dir).map_err(GatewayError::Cache)?,
            limiter,
            inflight: Arc::new(Semaphore::new(cfg.parallelism)),
            max_retries: cfg.max_retries,
            backoff_base: Duration::from_millis(200),
            dispatched: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
        })
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    /// Number of requests that actually reached the backend.
    pub fn dispatched(&self) -> u64 {
        self.dispatched.load(Ordering::Relaxed)
    }

    pub fn cache_hits(&self) -> u64 {
        self.cache_hits.load(Ordering::Relaxed)
    }

    /// Send a request, serving from cache when possible.
    pub async fn send(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let key = cache_key(request)?;
        if let Some(mut hit) = self.cache.get(&key) {
            hit.cached = true;
            self.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(hit);
        }

        let _permit = self
            .inflight
            .acquire()
            .await
            .expect("semaphore never closed");

        let mut attempt = 0u32;
        loop {
            if let Some(limiter) = &self.limiter {
                limiter.acquire().await;
            }
            self.dispatched.fetch_add(1, Ordering::Relaxed);
            let started = std::time::Instant::now();
            match self.dispatch(request).await {
                Ok((text, usage)) => {
                    let response = ChatResponse {
                        text,
                        usage,
                        latency_ms: started.elapsed().as_millis() as u64,
                        cached: false,
                    };
                    self.cache.put(&key, &response).map_err(GatewayError::Cache)?;
                    return Ok(response);
                }
                Err(DispatchError::Fatal(e)) => return Err(e),
                Err(DispatchError::Retryable(msg)) => {
                    if attempt >= self.max_retries {
                        return Err(GatewayError::RetriesExhausted {
                            attempts: attempt + 1,
                            last: msg,
                        });
                    }
                    let backoff = self.backoff_base * 2u32.pow(attempt.min(8));
                    tokio::time::sleep(backoff.min(Duration::from_secs(5))).await;
                    attempt += 1;
                }
            }
        }
    }

    async fn dispatch(
        &self,
        request: &ChatRequest,
    ) -> Result<(String, Option<Usage>), DispatchError> {
        match &self.transport {
            Transport::Mock(script) => script
                .respond(&request.parts)
                .map(|text| (text, None))
                .ok_or(DispatchError::Fatal(GatewayError::MockMiss)),
            Transport::Http(http) => {
                let body = wire::request_to_wire(request);
                let mut builder = http.client.post(&http.endpoint).json(&body);
                if let Some(key) = &http.api_key {
                    builder = builder.bearer_auth(key);
                }
                let response = builder.send().await.map_err(|e| {
                    // connect errors and timeouts are transient
                    DispatchError::Retryable(e.to_string())
                })?;
                let status = response.status();
                if status.as_u16() == 429 || status.is_server_error() {
                    return Err(DispatchError::Retryable(format!("HTTP {status}")));
                }
                if !status.is_success() {
                    let body = response.text().await.unwrap_or_default();
                    return Err(DispatchError::Fatal(GatewayError::Rejected {
                        status: status.as_u16(),
                        body: truncate(&body, 500),
                    }));
                }
                let parsed: wire::WireChatResponse = response.json().await.map_err(|e| {
                    DispatchError::Fatal(GatewayError::MalformedResponse(e.to_string()))
                })?;
                wire::response_from_wire(parsed).map_err(DispatchError::Fatal)
            }
        }
    }
}

fn truncate(s: &str, max: usize) -> String {
    if s.len() <= max {
        s.to_string()
    } else {
        let mut end = max;
        while !s.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}…", &s[..end])
    }
}
