//! QA dataset ingestion: canonical record model, line-format parsing,
//! train/test splitting, fine-tuning export and hyperparameter planning.

mod finetune;
mod format;
mod plan;
mod record;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use finetune::{export_finetune_file, render_assistant_turn, ChatExample, ChatTurn};
pub use format::{parse_dataset, write_records};
pub use plan::{plan_hyperparameters, FinetunePlan, PublishedRun, PUBLISHED_RUNS};
pub use record::{AnswerLabel, Dataset, GoldAnswer, QARecord, QaMode};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed record: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("duplicate record id `{id}`")]
    DuplicateId { id: String },
    #[error("line {line}: unknown answer label `{value}`")]
    UnknownLabel { line: usize, value: String },
    #[error("record `{id}` cannot be rendered as a training example: {reason}")]
    UnrenderableRecord { id: String, reason: String },
    #[error("input is empty")]
    EmptyInput,
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("training example count must be at least 1")]
    InvalidCount,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Deterministic seeded train/test partition.
///
/// `|train| = round(train_fraction * N)`. Records keep their input order
/// inside each side.
pub fn split(
    records: &[QARecord],
    seed: u64,
    train_fraction: f64,
) -> Result<(Vec<QARecord>, Vec<QARecord>), CorpusError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(CorpusError::InvalidFraction(train_fraction));
    }
    if records.is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    let n_train = (train_fraction * records.len() as f64).round() as usize;

    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut in_train = vec![false; records.len()];
    for &i in &order[..n_train] {
        in_train[i] = true;
    }

    let (train, test): (Vec<_>, Vec<_>) = records
        .iter()
        .zip(in_train)
        .partition(|(_, train)| *train);
    Ok((
        train.into_iter().map(|(r, _)| r.clone()).collect(),
        test.into_iter().map(|(r, _)| r.clone()).collect(),
    ))
}
