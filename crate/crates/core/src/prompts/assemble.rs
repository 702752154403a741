use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{PromptError, PromptProfile};
use crate::corpus::QARecord;
use crate::index::KnowledgeChunk;
use crate::llm::{ChatMessage, ChatRequest, DecodingParams};

/// A retrieved chunk and its retrieval score, in rank order.
pub type RetrievedChunk = (KnowledgeChunk, f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptInstance {
    pub record_id: String,
    pub system_message: String,
    pub user_message: String,
    pub params: DecodingParams,
}

impl PromptInstance {
    pub fn to_request(&self, model: &str) -> ChatRequest {
        ChatRequest {
            model: model.to_string(),
            messages: vec![
                ChatMessage::system(self.system_message.clone()),
                ChatMessage::user(self.user_message.clone()),
            ],
            params: self.params.clone(),
            tag: Some(self.record_id.clone()),
        }
    }
}

/// Builds the user turn for `record`.
///
/// Layout, each block separated by a blank line and omitted when empty:
///
/// ```text
/// Context:
/// [1] <retrieved chunk, rank 1>
/// [2] <retrieved chunk, rank 2>
/// End of context.
///
/// Background:
/// <record context passages>
///
/// Question: <question>
///
/// Options:
/// A. <text>
/// B. <text>
/// ```
pub fn assemble(
    profile: &PromptProfile,
    record: &QARecord,
    hits: Option<&[RetrievedChunk]>,
) -> Result<PromptInstance, PromptError> {
    if !profile.mode.accepts(record.mode) {
        return Err(PromptError::ModeMismatch {
            record_id: record.id.clone(),
            record_mode: record.mode,
            profile_mode: profile.mode,
        });
    }
    let profile = profile.effective_for(record.mode);

    let mut blocks: Vec<String> = Vec::new();
    if let Some(hits) = hits.filter(|h| !h.is_empty()) {
        let mut block = String::from("Context:\n");
        for (rank, (chunk, _)) in hits.iter().enumerate() {
            let _ = writeln!(block, "[{}] {}", rank + 1, chunk.text.trim());
        }
        block.push_str("End of context.");
        blocks.push(block);
    }
    let passages: Vec<&str> = record
        .contexts
        .iter()
        .map(|c| c.trim())
        .filter(|c| !c.is_empty())
        .collect();
    if !passages.is_empty() {
        blocks.push(format!("Background:\n{}", passages.join("\n")));
    }
    blocks.push(format!("Question: {}", record.question.trim()));
    if !record.options.is_empty() {
        let lines: Vec<String> = record
            .options
            .iter()
            .map(|(label, text)| format!("{label}. {}", text.trim()))
            .collect();
        blocks.push(format!("Options:\n{}", lines.join("\n")));
    }

    Ok(PromptInstance {
        record_id: record.id.clone(),
        system_message: profile.system_message,
        user_message: blocks.join("\n\n"),
        params: profile.params,
    })
}
