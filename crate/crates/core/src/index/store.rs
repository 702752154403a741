//! Line-delimited index file.
//!
//! ```text
//! {"format":"bioqa-index","version":1,"doc_count":2,"term_count":5}
//! {"chunk":{...}}            one line per chunk, by chunk id
//! {"term":"aspirin","postings":[["d1",1],["d2",2]]}   one line per term
//! ```
//!
//! Loading rebuilds the index from the chunk lines and rejects the file if
//! the stored postings disagree with the rebuilt ones.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{build_index, Index, IndexError, KnowledgeChunk, Posting};

pub const INDEX_FORMAT: &str = "bioqa-index";
pub const INDEX_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    doc_count: usize,
    term_count: usize,
}

#[derive(Serialize, Deserialize)]
struct ChunkLine {
    chunk: KnowledgeChunk,
}

#[derive(Serialize, Deserialize)]
struct TermLine {
    term: String,
    postings: Vec<(String, usize)>,
}

fn json_err(e: serde_json::Error) -> IndexError {
    IndexError::Io(std::io::Error::from(e))
}

pub fn save_index<W: Write>(index: &Index, mut out: W) -> Result<(), IndexError> {
    let header = Header {
        format: INDEX_FORMAT.into(),
        version: INDEX_VERSION,
        doc_count: index.doc_count(),
        term_count: index.postings.len(),
    };
    serde_json::to_writer(&mut out, &header).map_err(json_err)?;
    out.write_all(b"\n")?;
    for chunk in index.chunks() {
        serde_json::to_writer(&mut out, &ChunkLine { chunk: chunk.clone() }).map_err(json_err)?;
        out.write_all(b"\n")?;
    }
    for (term, postings) in index.terms() {
        let line = TermLine {
            term: term.to_string(),
            postings: postings.iter().map(|p| (p.chunk_id.clone(), p.tf)).collect(),
        };
        serde_json::to_writer(&mut out, &line).map_err(json_err)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn load_index<R: BufRead>(reader: R) -> Result<Index, IndexError> {
    let corrupt = |msg: String| IndexError::Corrupt(msg);
    let mut lines = reader.lines();
    let header_line = lines.next().ok_or_else(|| corrupt("missing header".into()))??;
    let header: Header = serde_json::from_str(&header_line).map_err(|e| corrupt(format!("header: {e}")))?;
    if header.format != INDEX_FORMAT {
        return Err(corrupt(format!("not an index file (format `{}`)", header.format)));
    }
    if header.version != INDEX_VERSION {
        return Err(corrupt(format!("unsupported index version {}", header.version)));
    }

    let mut chunks = Vec::with_capacity(header.doc_count);
    for i in 0..header.doc_count {
        let line = lines.next().ok_or_else(|| corrupt(format!("missing chunk line {}", i + 1)))??;
        let parsed: ChunkLine = serde_json::from_str(&line).map_err(|e| corrupt(format!("chunk line {}: {e}", i + 1)))?;
        chunks.push(parsed.chunk);
    }
    let index = build_index(chunks)?;

    let mut terms = 0;
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TermLine = serde_json::from_str(&line).map_err(|e| corrupt(format!("postings: {e}")))?;
        let stored: Vec<Posting> = parsed
            .postings
            .into_iter()
            .map(|(chunk_id, tf)| Posting { chunk_id, tf })
            .collect();
        if index.postings(&parsed.term) != stored.as_slice() {
            return Err(corrupt(format!("postings for `{}` do not match the chunks", parsed.term)));
        }
        terms += 1;
    }
    if terms != header.term_count || terms != index.postings.len() {
        return Err(corrupt(format!("expected {} terms, found {terms}", header.term_count)));
    }
    Ok(index)
}
