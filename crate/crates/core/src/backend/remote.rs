//! HTTP client for completions-style APIs that can echo the prompt with
//! per-token log-probabilities.
//!
//! For each (prompt, candidate) pair the client sends `prompt + candidate` with
//! `echo = true` and sums the log-probabilities of the tokens overlapping the
//! candidate span. Request body:
//!
//! ```json
//! {"model": "...", "prompt": "<prompt><candidate>", "max_tokens": 1,
//!  "echo": true, "logprobs": 1, "temperature": 0}
//! ```
//!
//! The response must carry `choices[0].logprobs.{tokens, token_logprobs, text_offset}`
//! with character offsets into the echoed text.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ScoringBackend, ScoringRequest};
use crate::error::{BackendError, SelectionError};
use crate::selection::EmbeddingProvider;
use crate::types::ScoreVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    /// Sum of continuation token log-probabilities.
    #[default]
    Sum,
    /// Sum divided by the number of continuation tokens.
    MeanPerToken,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    #[serde(default = "default_token_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// First retry delay; doubles on every further attempt.
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub score_mode: ScoreMode,
    /// Model used by the remote embedding provider, if any.
    #[serde(default)]
    pub embedding_model: Option<String>,
}

fn default_token_env() -> String {
    "ICCD_API_KEY".to_string()
}
fn default_timeout() -> f64 {
    60.0
}
fn default_retries() -> u32 {
    3
}
fn default_backoff() -> u64 {
    500
}
fn default_in_flight() -> usize {
    8
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            api_key_env: default_token_env(),
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            backoff_ms: default_backoff(),
            max_in_flight: default_in_flight(),
            score_mode: ScoreMode::Sum,
            embedding_model: None,
        }
    }
}

/// Counting semaphore bounding concurrent upstream calls.
#[derive(Debug)]
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut free = self.free.lock().expect("gate poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("gate poisoned");
        }
        *free -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("gate poisoned") += 1;
        self.0.cv.notify_one();
    }
}

/// JSON-over-HTTP POST with bearer auth, a concurrency gate and exponential
/// backoff on timeouts, connection failures, 429 and 5xx.
#[derive(Debug)]
pub struct HttpTransport {
    client: reqwest::blocking::Client,
    base_url: String,
    token: Option<String>,
    max_retries: u32,
    backoff: Duration,
    gate: Gate,
}

impl HttpTransport {
    pub fn new(cfg: &RemoteConfig) -> Result<Self, BackendError> {
        if !(cfg.timeout_secs > 0.0 && cfg.timeout_secs.is_finite()) {
            return Err(BackendError::InvalidRequest("timeout_secs must be positive".into()));
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_secs))
            .build()
            .map_err(|e| BackendError::Unavailable(e.to_string()))?;
        let token = std::env::var(&cfg.api_key_env).ok().filter(|t| !t.is_empty());
        Ok(Self {
            client,
            base_url: cfg.base_url.trim_end_matches('/').to_string(),
            token,
            max_retries: cfg.max_retries,
            backoff: Duration::from_millis(cfg.backoff_ms),
            gate: Gate::new(cfg.max_in_flight),
        })
    }

    pub fn post_json(&self, path: &str, body: &Value) -> Result<Value, BackendError> {
        let url = format!("{}/{}", self.base_url, path.trim_start_matches('/'));
        let mut attempt = 0;
        loop {
            let outcome = {
                let _slot = self.gate.acquire();
                let mut req = self.client.post(&url).json(body);
                if let Some(t) = &self.token {
                    req = req.bearer_auth(t);
                }
                req.send()
            };
            let (retryable, err) = match outcome {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        return resp
                            .json::<Value>()
                            .map_err(|e| BackendError::ProtocolMismatch(format!("response is not JSON: {e}")));
                    }
                    let text = resp.text().unwrap_or_default();
                    let retryable = status.is_server_error() || status.as_u16() == 429;
                    (
                        retryable,
                        BackendError::Transport {
                            status: Some(status.as_u16()),
                            message: truncate(&text, 200),
                        },
                    )
                }
                Err(e) => (
                    e.is_timeout() || e.is_connect(),
                    BackendError::Transport {
                        status: None,
                        message: e.to_string(),
                    },
                ),
            };
            if !retryable || attempt >= self.max_retries {
                return Err(err);
            }
            std::thread::sleep(self.backoff * 2u32.saturating_pow(attempt));
            attempt += 1;
        }
    }
}

fn truncate(s: &str, n: usize) -> String {
    match s.char_indices().nth(n) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}

/// Log-probabilities of the echoed tokens that overlap characters
/// `start..end` of the echoed text.
pub(crate) fn continuation_logprobs(
    response: &Value,
    start: usize,
    end: usize,
    candidate: &str,
) -> Result<Vec<f64>, BackendError> {
    let lp = response
        .pointer("/choices/0/logprobs")
        .ok_or_else(|| BackendError::ProtocolMismatch("missing choices[0].logprobs".into()))?;
    let array = |key: &str| {
        lp.get(key)
            .and_then(Value::as_array)
            .ok_or_else(|| BackendError::ProtocolMismatch(format!("missing logprobs.{key}")))
    };
    let tokens = array("tokens")?;
    let logprobs = array("token_logprobs")?;
    let offsets = array("text_offset")?;
    if tokens.len() != logprobs.len() || tokens.len() != offsets.len() {
        return Err(BackendError::ProtocolMismatch("logprobs arrays differ in length".into()));
    }
    let mut out = Vec::new();
    for i in 0..tokens.len() {
        let tok_start = offsets[i]
            .as_u64()
            .ok_or_else(|| BackendError::ProtocolMismatch("text_offset is not an integer".into()))?
            as usize;
        let tok_len = tokens[i].as_str().map_or(0, |t| t.chars().count());
        let tok_end = match offsets.get(i + 1).and_then(Value::as_u64) {
            Some(next) => next as usize,
            None => tok_start + tok_len,
        };
        if tok_start >= end {
            break;
        }
        if tok_end <= start || tok_end == tok_start {
            continue;
        }
        let value = logprobs[i].as_f64().ok_or_else(|| BackendError::CandidateTokenization {
            candidate: candidate.to_string(),
            reason: format!("token {i} overlapping the candidate has no log-probability"),
        })?;
        out.push(value);
    }
    if out.is_empty() {
        return Err(BackendError::CandidateTokenization {
            candidate: candidate.to_string(),
            reason: "no echoed token overlaps the candidate span".into(),
        });
    }
    Ok(out)
}

#[derive(Debug)]
pub struct RemoteBackend {
    cfg: RemoteConfig,
    transport: HttpTransport,
}

impl RemoteBackend {
    pub fn new(cfg: RemoteConfig) -> Result<Self, BackendError> {
        let transport = HttpTransport::new(&cfg)?;
        Ok(Self { cfg, transport })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.cfg
    }

    fn score_candidate(&self, prompt: &str, candidate: &str) -> Result<f64, BackendError> {
        let text = format!("{prompt}{candidate}");
        let body = json!({
            "model": self.cfg.model,
            "prompt": text,
            "max_tokens": 1,
            "echo": true,
            "logprobs": 1,
            "temperature": 0,
        });
        let response = self.transport.post_json("completions", &body)?;
        let start = prompt.chars().count();
        let end = start + candidate.chars().count();
        let lps = continuation_logprobs(&response, start, end, candidate)?;
        let sum: f64 = lps.iter().sum();
        Ok(match self.cfg.score_mode {
            ScoreMode::Sum => sum,
            ScoreMode::MeanPerToken => sum / lps.len() as f64,
        })
    }
}

impl ScoringBackend for RemoteBackend {
    /// One upstream call per candidate, issued concurrently. Any failure fails
    /// the whole request.
    fn score(&self, request: &ScoringRequest) -> Result<ScoreVector, BackendError> {
        request.validate()?;
        let results: Vec<Result<f64, BackendError>> = std::thread::scope(|s| {
            let handles: Vec<_> = request
                .candidates
                .iter()
                .map(|c| s.spawn(move || self.score_candidate(&request.prompt, c)))
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join()
                        .unwrap_or_else(|_| Err(BackendError::Unavailable("scoring thread panicked".into())))
                })
                .collect()
        });
        let scores = results.into_iter().collect::<Result<Vec<_>, _>>()?;
        Ok(ScoreVector::new(scores)?)
    }

    fn max_in_flight(&self) -> usize {
        self.cfg.max_in_flight.max(1)
    }

    fn identity(&self) -> String {
        format!("remote({}@{})", self.cfg.model, self.cfg.base_url)
    }
}

/// Embeddings over the same transport: POST `embeddings` with
/// `{"model", "input"}`, reading `data[0].embedding`.
#[derive(Debug)]
pub struct RemoteEmbeddingProvider {
    model: String,
    transport: HttpTransport,
}

impl RemoteEmbeddingProvider {
    pub fn new(cfg: &RemoteConfig) -> Result<Self, BackendError> {
        Ok(Self {
            model: cfg.embedding_model.clone().unwrap_or_else(|| cfg.model.clone()),
            transport: HttpTransport::new(cfg)?,
        })
    }
}

impl EmbeddingProvider for RemoteEmbeddingProvider {
    fn embed(&self, text: &str) -> Result<Vec<f64>, SelectionError> {
        let body = json!({ "model": self.model, "input": text });
        let response = self
            .transport
            .post_json("embeddings", &body)
            .map_err(|e| SelectionError::ProviderFailure(e.to_string()))?;
        let vec = response
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or_else(|| SelectionError::ProviderFailure("missing data[0].embedding".into()))?;
        vec.iter()
            .map(|v| {
                v.as_f64()
                    .ok_or_else(|| SelectionError::ProviderFailure("embedding entry is not a number".into()))
            })
            .collect()
    }
}
