use std::sync::Arc;
use std::time::{Duration, Instant};

use async_trait::async_trait;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Semaphore;
use tracing::debug;

use super::{Backend, ChatRequest, DecodingParams, FinishReason, LlmError, ModelResponse};

fn default_parallel() -> usize {
    4
}

fn default_timeout_ms() -> u64 {
    60_000
}

/// Connection settings for a chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    /// Header carrying the key. `Authorization` (the default) sends
    /// `Bearer <key>`; any other header gets the bare key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_header: Option<String>,
    #[serde(default = "default_parallel")]
    pub max_parallel: usize,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
            jitter: true,
        }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32) -> Duration {
        let exp = self.base_delay.saturating_mul(1 << attempt.min(16)).min(self.max_delay);
        if self.jitter {
            exp.mul_f64(rand::rng().random_range(0.5..1.0))
        } else {
            exp
        }
    }
}

pub struct HttpBackend {
    client: reqwest::Client,
    config: HttpBackendConfig,
    api_key: Option<String>,
    retry: RetryPolicy,
    permits: Arc<Semaphore>,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, LlmError> {
        Self::with_retry(config, RetryPolicy::default())
    }

    pub fn with_retry(config: HttpBackendConfig, retry: RetryPolicy) -> Result<Self, LlmError> {
        if config.max_parallel == 0 {
            return Err(LlmError::Config("max_parallel must be at least 1".into()));
        }
        let api_key = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| LlmError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let client = reqwest::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| LlmError::Config(e.to_string()))?;
        let permits = Arc::new(Semaphore::new(config.max_parallel));
        Ok(Self { client, config, api_key, retry, permits })
    }

    pub fn model(&self) -> &str {
        &self.config.model
    }

    async fn attempt(&self, body: &Value) -> Result<(Value, u16), Attempt> {
        let mut req = self.client.post(&self.config.endpoint).json(body);
        if let Some(key) = &self.api_key {
            req = match self.config.api_key_header.as_deref() {
                None | Some("Authorization") => req.bearer_auth(key),
                Some(header) => req.header(header, key),
            };
        }
        let resp = req.send().await.map_err(Attempt::from_reqwest)?;
        let status = resp.status();
        let text = resp.text().await.map_err(Attempt::from_reqwest)?;
        if status.is_success() {
            let value = serde_json::from_str(&text)
                .map_err(|e| Attempt::Fatal(LlmError::Transport(format!("invalid response body: {e}"))))?;
            return Ok((value, status.as_u16()));
        }
        let refusal = LlmError::BackendRefusal { status: status.as_u16(), body: text };
        if status.as_u16() == 429 || status.is_server_error() {
            Err(Attempt::Transient(refusal))
        } else {
            Err(Attempt::Fatal(refusal))
        }
    }
}

enum Attempt {
    Transient(LlmError),
    Fatal(LlmError),
}

impl Attempt {
    fn from_reqwest(e: reqwest::Error) -> Self {
        if e.is_timeout() {
            Attempt::Transient(LlmError::Timeout)
        } else {
            Attempt::Transient(LlmError::Transport(e.to_string()))
        }
    }
}

/// JSON body for a chat-completions POST. Every decoding field is written
/// out; `stop` and `seed` are omitted only when empty/unset.
pub fn to_wire(request: &ChatRequest) -> Value {
    let p = &request.params;
    let mut body = json!({
        "model": request.model,
        "messages": request.messages,
        "max_tokens": p.max_tokens,
        "temperature": p.temperature,
        "top_p": p.top_p,
        "frequency_penalty": p.frequency_penalty,
        "presence_penalty": p.presence_penalty,
    });
    if !p.stop.is_empty() {
        body["stop"] = json!(p.stop);
    }
    if let Some(seed) = p.seed {
        body["seed"] = json!(seed);
    }
    body
}

#[derive(Deserialize)]
struct WireParams {
    max_tokens: u32,
    temperature: f64,
    top_p: f64,
    frequency_penalty: f64,
    presence_penalty: f64,
    #[serde(default)]
    stop: Option<StopField>,
    #[serde(default)]
    seed: Option<u64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum StopField {
    One(String),
    Many(Vec<String>),
}

/// Recovers [`DecodingParams`] from a wire body produced by [`to_wire`] (or
/// by any client of the same API shape).
pub fn params_from_wire(body: &Value) -> Result<DecodingParams, serde_json::Error> {
    let w: WireParams = serde_json::from_value(body.clone())?;
    Ok(DecodingParams {
        max_tokens: w.max_tokens,
        temperature: w.temperature,
        top_p: w.top_p,
        frequency_penalty: w.frequency_penalty,
        presence_penalty: w.presence_penalty,
        stop: match w.stop {
            None => vec![],
            Some(StopField::One(s)) => vec![s],
            Some(StopField::Many(v)) => v,
        },
        seed: w.seed,
    })
}

fn parse_completion(value: &Value) -> Result<(Option<String>, FinishReason), LlmError> {
    let choice = value
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| LlmError::Transport("response has no choices".into()))?;
    let finish = match choice.get("finish_reason").and_then(Value::as_str) {
        Some("stop") | None => FinishReason::Stop,
        Some("length") => FinishReason::Length,
        Some(_) => FinishReason::Error,
    };
    if finish == FinishReason::Error {
        return Ok((None, finish));
    }
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    Ok((Some(text), finish))
}

#[async_trait]
impl Backend for HttpBackend {
    fn id(&self) -> &str {
        &self.config.model
    }

    fn max_parallel(&self) -> usize {
        self.config.max_parallel
    }

    async fn send(&self, request: &ChatRequest) -> Result<ModelResponse, LlmError> {
        let _permit = self.permits.acquire().await.expect("semaphore never closed");
        let body = to_wire(request);
        let started = Instant::now();
        let mut last = LlmError::Transport("no attempt made".into());
        for attempt in 0..self.retry.attempts {
            if attempt > 0 {
                let delay = self.retry.delay(attempt - 1);
                debug!(attempt, ?delay, "retrying chat completion");
                tokio::time::sleep(delay).await;
            }
            match self.attempt(&body).await {
                Ok((value, _)) => {
                    let (raw_text, finish_reason) = parse_completion(&value)?;
                    return Ok(ModelResponse {
                        raw_text,
                        finish_reason,
                        latency: started.elapsed(),
                        backend_id: self.id().to_string(),
                    });
                }
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Transient(e)) => last = e,
            }
        }
        Err(last)
    }
}
