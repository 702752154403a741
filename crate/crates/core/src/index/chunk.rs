use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use super::analyzer::{analyze, analyze_with_spans, TokenSequence};
use super::IndexError;
use crate::corpus::QARecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkField {
    Question,
    Answer,
}

impl ChunkField {
    fn tag(self) -> &'static str {
        match self {
            ChunkField::Question => "q",
            ChunkField::Answer => "a",
        }
    }
}

/// An indexable span of one record field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeChunk {
    pub chunk_id: String,
    pub source_record_id: String,
    pub field: ChunkField,
    pub text: String,
    /// Always `analyze(text)`.
    pub tokens: TokenSequence,
    /// Position of the chunk within its field, from 0.
    pub ordinal: usize,
    /// Byte range of `text` within the source field. Consecutive chunks of
    /// one field overlap by `[next.start, prev.end)`.
    pub start: usize,
    pub end: usize,
}

impl KnowledgeChunk {
    /// A single-chunk document built directly from text.
    pub fn from_text(chunk_id: impl Into<String>, source_record_id: impl Into<String>, field: ChunkField, text: &str) -> Self {
        Self {
            chunk_id: chunk_id.into(),
            source_record_id: source_record_id.into(),
            field,
            text: text.to_string(),
            tokens: analyze(text),
            ordinal: 0,
            start: 0,
            end: text.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkPolicy {
    pub max_tokens: usize,
    pub overlap: usize,
}

impl Default for ChunkPolicy {
    fn default() -> Self {
        Self { max_tokens: 256, overlap: 32 }
    }
}

impl ChunkPolicy {
    pub fn validate(&self) -> Result<(), IndexError> {
        if self.max_tokens < 8 {
            return Err(IndexError::PolicyInvalid(format!("max_tokens {} is below 8", self.max_tokens)));
        }
        if self.overlap >= self.max_tokens {
            return Err(IndexError::PolicyInvalid(format!(
                "overlap {} must be smaller than max_tokens {}",
                self.overlap, self.max_tokens
            )));
        }
        Ok(())
    }
}

/// Splits a record's question and answer fields into chunks.
///
/// Chunk ids are `<record id>:q:<ordinal>` and `<record id>:a:<ordinal>`.
/// Fields without any index terms produce no chunks.
pub fn crack_and_chunk(record: &QARecord, policy: ChunkPolicy) -> Result<Vec<KnowledgeChunk>, IndexError> {
    policy.validate()?;
    let mut chunks = chunk_field(&record.id, ChunkField::Question, &record.question, policy);
    if let Some(answer) = record.answer_text() {
        chunks.extend(chunk_field(&record.id, ChunkField::Answer, &answer, policy));
    }
    Ok(chunks)
}

/// Greedy packing of whole sentences into windows of at most
/// `max_tokens` index terms. A window ends at the last sentence boundary
/// that fits; a sentence longer than the window is cut between terms. Each
/// window after the first starts `overlap` terms before the previous end.
pub(crate) fn chunk_field(record_id: &str, field: ChunkField, text: &str, policy: ChunkPolicy) -> Vec<KnowledgeChunk> {
    let tokens = analyze_with_spans(text);
    let m = tokens.len();
    if m == 0 {
        return Vec::new();
    }

    let sentence_starts: Vec<usize> = text
        .split_sentence_bound_indices()
        .map(|(i, _)| i)
        .filter(|&i| i > 0)
        .collect();

    // cut[i]: byte offset where a chunk ending before token i stops. It is
    // the sentence start between tokens i-1 and i when there is one.
    let mut cut = vec![0usize; m + 1];
    let mut at_sentence = vec![false; m + 1];
    cut[m] = text.len();
    for i in 1..m {
        let prev_end = tokens[i - 1].1;
        let start = tokens[i].0;
        match sentence_starts.iter().rev().find(|&&s| s >= prev_end && s <= start) {
            Some(&s) => {
                cut[i] = s;
                at_sentence[i] = true;
            }
            None => cut[i] = start,
        }
    }

    let mut windows = Vec::new();
    let mut first = 0;
    let mut fresh_from = 0;
    loop {
        let limit = (first + policy.max_tokens).min(m);
        let end = if limit == m {
            m
        } else {
            (fresh_from + 1..=limit).rev().find(|&e| at_sentence[e]).unwrap_or(limit)
        };
        windows.push((first, end));
        if end == m {
            break;
        }
        fresh_from = end;
        first = end.saturating_sub(policy.overlap).max(first);
    }

    windows
        .into_iter()
        .enumerate()
        .map(|(ordinal, (first, end))| {
            let start = if ordinal == 0 { 0 } else { cut[first] };
            let stop = cut[end];
            let span = &text[start..stop];
            KnowledgeChunk {
                chunk_id: format!("{record_id}:{}:{ordinal}", field.tag()),
                source_record_id: record_id.to_string(),
                field,
                text: span.to_string(),
                tokens: analyze(span),
                ordinal,
                start,
                end: stop,
            }
        })
        .collect()
}

/// Rebuilds a field's text from its chunks by dropping the overlapping prefixes.
pub fn reassemble(chunks: &[KnowledgeChunk]) -> String {
    let mut out = String::new();
    let mut covered: usize = 0;
    for c in chunks {
        let skip = covered.saturating_sub(c.start).min(c.text.len());
        out.push_str(&c.text[skip..]);
        covered = c.end;
    }
    out
}
