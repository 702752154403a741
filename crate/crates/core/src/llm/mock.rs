use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{whitespace_token_spans, Backend, ChatMessage, ChatRequest, FinishReason, LlmError, ModelResponse};

/// How a mock looks up the scripted response for a request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockKeying {
    RecordId,
    MessageHash,
}

/// Offline scripted backend.
///
/// Responses go through the same stop-sequence and `max_tokens` handling a
/// real endpoint applies, counting whitespace-separated tokens.
#[derive(Debug, Clone)]
pub struct MockBackend {
    script: HashMap<String, String>,
    keying: MockKeying,
}

pub fn make_mock(script: HashMap<String, String>, keying: MockKeying) -> Result<MockBackend, LlmError> {
    if script.is_empty() {
        return Err(LlmError::EmptyScript);
    }
    Ok(MockBackend { script, keying })
}

#[derive(Deserialize)]
struct ScriptLine {
    key: String,
    response: String,
}

/// Reads a `{"key": ..., "response": ...}` line file.
pub fn load_script(path: &Path) -> Result<HashMap<String, String>, LlmError> {
    let file = File::open(path).map_err(|e| LlmError::Config(format!("{}: {e}", path.display())))?;
    let mut script = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| LlmError::Config(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ScriptLine = serde_json::from_str(&line)
            .map_err(|e| LlmError::Config(format!("{}:{}: {e}", path.display(), i + 1)))?;
        script.insert(entry.key, entry.response);
    }
    Ok(script)
}

/// Hex SHA-256 over the JSON encoding of the message list.
pub fn message_hash(messages: &[ChatMessage]) -> String {
    let bytes = serde_json::to_vec(messages).expect("messages serialize");
    hex::encode(Sha256::digest(&bytes))
}

impl MockBackend {
    fn key_for(&self, request: &ChatRequest) -> Option<String> {
        match self.keying {
            MockKeying::RecordId => request.tag.clone(),
            MockKeying::MessageHash => Some(message_hash(&request.messages)),
        }
    }
}

#[async_trait]
impl Backend for MockBackend {
    fn id(&self) -> &str {
        "mock"
    }

    async fn send(&self, request: &ChatRequest) -> Result<ModelResponse, LlmError> {
        let key = self.key_for(request).ok_or_else(|| LlmError::BackendRefusal {
            status: 400,
            body: "record-id keyed mock needs a tagged request".into(),
        })?;
        let scripted = self.script.get(&key).ok_or_else(|| LlmError::BackendRefusal {
            status: 404,
            body: format!("no scripted response for `{key}`"),
        })?;
        let (text, finish_reason) = apply_limits(scripted, &request.params.stop, request.params.max_tokens as usize);
        Ok(ModelResponse {
            raw_text: Some(text),
            finish_reason,
            latency: Duration::ZERO,
            backend_id: self.id().to_string(),
        })
    }
}

fn apply_limits(text: &str, stop: &[String], max_tokens: usize) -> (String, FinishReason) {
    let cut = stop
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text.find(s.as_str()))
        .min()
        .unwrap_or(text.len());
    let text = &text[..cut];
    let spans = whitespace_token_spans(text);
    if spans.len() >= max_tokens {
        let end = spans[max_tokens - 1].1;
        (text[..end].to_string(), FinishReason::Length)
    } else {
        (text.to_string(), FinishReason::Stop)
    }
}
