//! Biomedical question-answering evaluation harness.
//!
//! - [`corpus`]: dataset records, parsing, splitting, fine-tuning export
//! - [`index`]: analyzer, chunking, inverted index and BM25 search
//! - [`llm`]: chat-completion backends (HTTP and scripted mock)
//! - [`prompts`]: per-mode prompt profiles, prompt assembly, answer extraction
//! - [`metrics`]: ROUGE, BLEU, accuracy, response distributions, external scorers
//! - [`runner`]: evaluation runs, top-k sweeps and report rendering
//! - [`pairwise`]: blinded pairwise human review and tallying

pub mod corpus;
pub mod index;
pub mod llm;
pub mod metrics;
pub mod pairwise;
pub mod prompts;
pub mod runner;
