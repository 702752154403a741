//! Keyword retrieval: analyzer, document cracking and chunking, an immutable
//! field-mapped inverted index, and BM25-ranked search.
//!
//! ```text
//! score(D, Q) = Σ_{t ∈ Q} idf(t) · tf(t,D)·(k1 + 1) / (tf(t,D) + k1·(1 − b + b·|D|/avgdl))
//! idf(t)      = ln(1 + (N − df(t) + 0.5) / (df(t) + 0.5))
//! ```
//!
//! Query terms are deduplicated. Ties are broken by chunk id ascending, so a
//! search is a total, platform-independent order.

mod analyzer;
mod chunk;
mod porter;
mod store;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::QARecord;

pub use analyzer::{analyze, is_stopword, TokenSequence, STOPWORDS_EN};
pub use chunk::{crack_and_chunk, reassemble, ChunkField, ChunkPolicy, KnowledgeChunk};
pub use porter::stem;
pub use store::{load_index, save_index, INDEX_FORMAT, INDEX_VERSION};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("duplicate chunk id `{0}`")]
    DuplicateChunkId(String),
    #[error("unknown chunk id `{0}`")]
    UnknownChunkId(String),
    #[error("query has no index terms")]
    EmptyQuery,
    #[error("index is empty")]
    EmptyIndex,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("invalid chunk policy: {0}")]
    PolicyInvalid(String),
    #[error("corrupt index file: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

/// Which record fields the index holds and how they are used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FieldMap {
    pub key: &'static str,
    pub searchable: &'static [&'static str],
    pub retrievable: &'static [&'static str],
}

pub const FIELD_MAP: FieldMap = FieldMap {
    key: "id",
    searchable: &["question", "answer"],
    retrievable: &["question", "answer"],
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub chunk_id: String,
    pub tf: usize,
}

/// Immutable inverted index over knowledge chunks.
#[derive(Debug, Clone, PartialEq)]
pub struct Index {
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lengths: BTreeMap<String, usize>,
    avg_doc_length: f64,
    chunks: BTreeMap<String, KnowledgeChunk>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub chunk_id: String,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

pub fn build_index(chunks: Vec<KnowledgeChunk>) -> Result<Index, IndexError> {
    let mut by_id = BTreeMap::new();
    for chunk in chunks {
        if by_id.contains_key(&chunk.chunk_id) {
            return Err(IndexError::DuplicateChunkId(chunk.chunk_id));
        }
        by_id.insert(chunk.chunk_id.clone(), chunk);
    }
    Ok(Index::from_map(by_id))
}

/// Chunks every record's question and answer fields and indexes the result.
pub fn index_records(records: &[QARecord], policy: ChunkPolicy) -> Result<Index, IndexError> {
    let mut chunks = Vec::new();
    for record in records {
        chunks.extend(crack_and_chunk(record, policy)?);
    }
    build_index(chunks)
}

/// Reads an index file written by [`save_index`].
pub fn load_index_file(path: &Path) -> Result<Index, IndexError> {
    load_index(BufReader::new(File::open(path)?))
}

/// Writes `index` to `path`, creating parent directories.
pub fn save_index_file(index: &Index, path: &Path) -> Result<(), IndexError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    save_index(index, BufWriter::new(File::create(path)?))
}

impl Index {
    fn from_map(chunks: BTreeMap<String, KnowledgeChunk>) -> Self {
        let mut postings: BTreeMap<String, Vec<Posting>> = BTreeMap::new();
        let mut doc_lengths = BTreeMap::new();
        // BTreeMap iteration is by chunk id, so every posting list comes out sorted.
        for (id, chunk) in &chunks {
            doc_lengths.insert(id.clone(), chunk.tokens.len());
            let mut tf: BTreeMap<&str, usize> = BTreeMap::new();
            for term in chunk.tokens.iter() {
                *tf.entry(term).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term.to_string()).or_default().push(Posting {
                    chunk_id: id.clone(),
                    tf: count,
                });
            }
        }
        let total: usize = doc_lengths.values().sum();
        let avg_doc_length = if doc_lengths.is_empty() {
            0.0
        } else {
            total as f64 / doc_lengths.len() as f64
        };
        Self { postings, doc_lengths, avg_doc_length, chunks }
    }

    pub fn doc_count(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_lengths(&self) -> &BTreeMap<String, usize> {
        &self.doc_lengths
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&str, &[Posting])> {
        self.postings.iter().map(|(t, p)| (t.as_str(), p.as_slice()))
    }

    pub fn chunk(&self, chunk_id: &str) -> Option<&KnowledgeChunk> {
        self.chunks.get(chunk_id)
    }

    pub fn chunks(&self) -> impl Iterator<Item = &KnowledgeChunk> {
        self.chunks.values()
    }

    pub fn field_map(&self) -> FieldMap {
        FIELD_MAP
    }

    /// Top-`k` chunks for `query` under BM25 (k1 = 1.2, b = 0.75).
    pub fn search(&self, query: &str, k: usize) -> Result<Vec<ScoredHit>, IndexError> {
        self.search_with(query, k, Bm25Params::default())
    }

    pub fn search_with(&self, query: &str, k: usize, params: Bm25Params) -> Result<Vec<ScoredHit>, IndexError> {
        if k == 0 {
            return Err(IndexError::InvalidK);
        }
        let terms: BTreeSet<String> = analyze(query).0.into_iter().collect();
        if terms.is_empty() {
            return Err(IndexError::EmptyQuery);
        }
        if self.doc_lengths.is_empty() {
            return Err(IndexError::EmptyIndex);
        }

        let n = self.doc_count() as f64;
        let mut scores: BTreeMap<&str, f64> = BTreeMap::new();
        for term in &terms {
            let list = self.postings(term);
            if list.is_empty() {
                continue;
            }
            let df = list.len() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            for posting in list {
                let dl = self.doc_lengths[&posting.chunk_id] as f64;
                let tf = posting.tf as f64;
                let norm = params.k1 * (1.0 - params.b + params.b * dl / self.avg_doc_length);
                *scores.entry(&posting.chunk_id).or_default() += idf * tf * (params.k1 + 1.0) / (tf + norm);
            }
        }

        let mut ranked: Vec<(&str, f64)> = scores.into_iter().filter(|(_, s)| *s > 0.0).collect();
        ranked.sort_by(|a, b| match b.1.total_cmp(&a.1) {
            Ordering::Equal => a.0.cmp(b.0),
            other => other,
        });
        Ok(ranked
            .into_iter()
            .take(k)
            .enumerate()
            .map(|(i, (id, score))| ScoredHit { chunk_id: id.to_string(), score, rank: i + 1 })
            .collect())
    }

    /// A new index with `removed` dropped and `added` inserted; `self` is untouched.
    pub fn refresh(&self, added: Vec<KnowledgeChunk>, removed: &[String]) -> Result<Index, IndexError> {
        let mut chunks = self.chunks.clone();
        for id in removed {
            if chunks.remove(id).is_none() {
                return Err(IndexError::UnknownChunkId(id.clone()));
            }
        }
        for chunk in added {
            if chunks.contains_key(&chunk.chunk_id) {
                return Err(IndexError::DuplicateChunkId(chunk.chunk_id));
            }
            chunks.insert(chunk.chunk_id.clone(), chunk);
        }
        Ok(Index::from_map(chunks))
    }
}
