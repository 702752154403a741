//! Chat-completion backends.
//!
//! A [`Backend`] takes a fully assembled [`ChatRequest`] and returns the raw
//! completion. Two implementations ship: [`HttpBackend`] for any endpoint
//! speaking the chat-completions JSON shape, and [`MockBackend`], a scripted
//! offline backend used for deterministic runs.

mod http;
mod mock;

use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{params_from_wire, to_wire, HttpBackend, HttpBackendConfig, RetryPolicy};
pub use mock::{load_script, make_mock, message_hash, MockBackend, MockKeying};

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("backend refused request ({status}): {body}")]
    BackendRefusal { status: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("mock script is empty")]
    EmptyScript,
    #[error("backend configuration: {0}")]
    Config(String),
}

/// Sampling and penalty configuration sent with every request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub max_tokens: u32,
    pub temperature: f64,
    pub top_p: f64,
    pub frequency_penalty: f64,
    pub presence_penalty: f64,
    #[serde(default)]
    pub stop: Vec<String>,
    /// Providers treat this as best effort; determinism is not guaranteed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl DecodingParams {
    pub fn validate(&self) -> Result<(), LlmError> {
        let bad = |msg: String| Err(LlmError::InvalidRequest(msg));
        if self.max_tokens < 1 {
            return bad("max_tokens must be at least 1".into());
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return bad(format!("temperature {} outside [0, 2]", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad(format!("top_p {} outside (0, 1]", self.top_p));
        }
        for (name, value) in [
            ("frequency_penalty", self.frequency_penalty),
            ("presence_penalty", self.presence_penalty),
        ] {
            if !(-2.0..=2.0).contains(&value) {
                return bad(format!("{name} {value} outside [-2, 2]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub params: DecodingParams,
    /// Record id the request was built for. Never sent over the wire.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), LlmError> {
        match self.messages.first() {
            Some(m) if m.role == Role::System => {}
            _ => return Err(LlmError::InvalidRequest("first message must be a system message".into())),
        }
        if !self.messages.iter().any(|m| m.role == Role::User) {
            return Err(LlmError::InvalidRequest("request has no user message".into()));
        }
        self.params.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    /// `None` exactly when `finish_reason` is `Error`.
    pub raw_text: Option<String>,
    pub finish_reason: FinishReason,
    pub latency: Duration,
    pub backend_id: String,
}

#[async_trait]
pub trait Backend: Send + Sync {
    fn id(&self) -> &str;

    /// Upper bound on in-flight requests the backend wants.
    fn max_parallel(&self) -> usize {
        4
    }

    async fn send(&self, request: &ChatRequest) -> Result<ModelResponse, LlmError>;
}

/// Validates `request` and submits it to `backend`.
pub async fn complete(backend: &dyn Backend, request: &ChatRequest) -> Result<ModelResponse, LlmError> {
    request.validate()?;
    backend.send(request).await
}

/// Whitespace token spans of `text`, as byte ranges.
pub(crate) fn whitespace_token_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, ch) in text.char_indices() {
        match (ch.is_whitespace(), start) {
            (true, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }
    spans
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn params() -> DecodingParams {
        DecodingParams {
            max_tokens: 50,
            temperature: 0.2,
            top_p: 0.85,
            frequency_penalty: 0.2,
            presence_penalty: 0.0,
            stop: vec![],
            seed: None,
        }
    }

    #[test]
    fn request_must_open_with_system() {
        let mut req = ChatRequest {
            model: "m".into(),
            messages: vec![ChatMessage::user("hi")],
            params: params(),
            tag: None,
        };
        assert!(req.validate().is_err());
        req.messages.insert(0, ChatMessage::system("sys"));
        assert!(req.validate().is_ok());
        req.messages.truncate(1);
        assert!(req.validate().is_err());
    }

    #[test]
    fn param_ranges() {
        let mut p = params();
        p.temperature = 2.5;
        assert!(p.validate().is_err());
        let mut p = params();
        p.top_p = 0.0;
        assert!(p.validate().is_err());
        let mut p = params();
        p.presence_penalty = -2.1;
        assert!(p.validate().is_err());
        let mut p = params();
        p.max_tokens = 0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn token_spans() {
        assert_eq!(whitespace_token_spans("  a bb\tc "), vec![(2, 3), (4, 6), (7, 8)]);
        assert!(whitespace_token_spans(" \n").is_empty());
    }
}
