//! Blinded pairwise review of two runs: task sampling, rating storage and
//! preference tallies.
//!
//! Each task shows one question with the two runs' answers on randomly
//! assigned sides A and B. Which run sits on which side is kept inside the
//! store and only used when tallying.

mod store;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::percent_shares;
use crate::runner::MetricReport;

pub use store::{NextTask, PairwiseStore, RatingAck};

#[derive(Debug, Error)]
pub enum PairwiseError {
    #[error("runs cover different data: {0}")]
    DatasetMismatch(String),
    #[error("asked for {requested} pairs but only {available} records have answers from both runs")]
    InsufficientRecords { requested: usize, available: usize },
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("rater `{rater_id}` already rated task `{task_id}`")]
    AlreadyRated { task_id: String, rater_id: String },
    #[error("rating is missing criteria: {}", .0.iter().map(|c| c.as_str()).collect::<Vec<_>>().join(", "))]
    MissingCriterion(Vec<Criterion>),
    #[error("rater id must not be empty")]
    EmptyRater,
    #[error("no ratings recorded yet")]
    NoRatings,
    #[error("store: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Accuracy,
    Coverage,
    Succinctness,
    Coherence,
    OverallQuality,
}

impl Criterion {
    pub const ALL: [Criterion; 5] = [
        Criterion::Accuracy,
        Criterion::Coverage,
        Criterion::Succinctness,
        Criterion::Coherence,
        Criterion::OverallQuality,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::Accuracy => "accuracy",
            Criterion::Coverage => "coverage",
            Criterion::Succinctness => "succinctness",
            Criterion::Coherence => "coherence",
            Criterion::OverallQuality => "overall_quality",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Criterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown criterion `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Choice {
    A,
    B,
    #[serde(rename = "tie")]
    Tie,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

/// A sampled comparison. `run1_side` is the sealed mapping; it is never
/// part of [`BlindTask`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairTask {
    pub task_id: String,
    pub record_id: String,
    pub question: String,
    pub side_a: String,
    pub side_b: String,
    pub run1_side: Side,
}

impl PairTask {
    pub fn blind(&self) -> BlindTask {
        BlindTask {
            task_id: self.task_id.clone(),
            question: self.question.clone(),
            side_a: self.side_a.clone(),
            side_b: self.side_b.clone(),
        }
    }
}

/// What a rater sees.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlindTask {
    pub task_id: String,
    pub question: String,
    pub side_a: String,
    pub side_b: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rating {
    pub task_id: String,
    pub rater_id: String,
    pub choices: BTreeMap<Criterion, Choice>,
    /// Filled in by the store when absent.
    #[serde(default)]
    pub timestamp: Option<chrono::DateTime<chrono::Utc>>,
}

impl Rating {
    /// Same task, rater and choices, regardless of timestamp.
    pub fn same_judgment(&self, other: &Rating) -> bool {
        self.task_id == other.task_id && self.rater_id == other.rater_id && self.choices == other.choices
    }

    pub fn missing_criteria(&self) -> Vec<Criterion> {
        Criterion::ALL.into_iter().filter(|c| !self.choices.contains_key(c)).collect()
    }
}

/// Preference split for one criterion, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreferenceShare {
    pub model1: f64,
    pub model2: f64,
    pub tie: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseSummary {
    /// Distinct tasks with at least one rating.
    pub n_tasks: usize,
    /// Ratings counted; equals `n_tasks` with a single rater.
    pub n_ratings: usize,
    pub criteria: BTreeMap<Criterion, PreferenceShare>,
}

fn answer_of(report: &MetricReport, i: usize) -> Option<&str> {
    let r = &report.records[i];
    r.extracted
        .as_deref()
        .or(r.raw_response.as_deref())
        .map(str::trim)
        .filter(|t| !t.is_empty())
}

/// Samples `n` records answered by both runs and blinds each pair.
///
/// Records are drawn by a seeded shuffle; each task then flips a seeded
/// coin to put run 1 on side A or side B.
pub fn sample_pairs(
    run1: &MetricReport,
    run2: &MetricReport,
    n: usize,
    seed: u64,
) -> Result<Vec<PairTask>, PairwiseError> {
    if run1.dataset != run2.dataset || run1.mode != run2.mode {
        return Err(PairwiseError::DatasetMismatch(format!(
            "{}/{} vs {}/{}",
            run1.dataset,
            run1.mode.as_str(),
            run2.dataset,
            run2.mode.as_str()
        )));
    }
    let by_id: HashMap<&str, usize> = run2.records.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
    let eligible: Vec<(usize, usize)> = run1
        .records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| by_id.get(r.id.as_str()).map(|&j| (i, j)))
        .filter(|&(i, j)| answer_of(run1, i).is_some() && answer_of(run2, j).is_some())
        .collect();
    if n > eligible.len() {
        return Err(PairwiseError::InsufficientRecords { requested: n, available: eligible.len() });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..eligible.len()).collect();
    order.shuffle(&mut rng);
    let width = n.to_string().len().max(3);
    Ok(order[..n]
        .iter()
        .enumerate()
        .map(|(t, &e)| {
            let (i, j) = eligible[e];
            let a1 = answer_of(run1, i).expect("eligible").to_string();
            let a2 = answer_of(run2, j).expect("eligible").to_string();
            let run1_side = if rng.random_bool(0.5) { Side::A } else { Side::B };
            let (side_a, side_b) = match run1_side {
                Side::A => (a1, a2),
                Side::B => (a2, a1),
            };
            PairTask {
                task_id: format!("task-{:0width$}", t + 1),
                record_id: run1.records[i].id.clone(),
                question: run1.records[i].question.clone(),
                side_a,
                side_b,
                run1_side,
            }
        })
        .collect())
}

/// Per-criterion preference percentages over all stored ratings, with
/// sides mapped back to run 1 (`model1`) and run 2 (`model2`).
pub fn tally(tasks: &[PairTask], ratings: &[Rating]) -> Result<PairwiseSummary, PairwiseError> {
    if ratings.is_empty() {
        return Err(PairwiseError::NoRatings);
    }
    let sides: HashMap<&str, Side> = tasks.iter().map(|t| (t.task_id.as_str(), t.run1_side)).collect();
    let mut counts: BTreeMap<Criterion, [usize; 3]> = Criterion::ALL.into_iter().map(|c| (c, [0; 3])).collect();
    for rating in ratings {
        let run1_side = *sides
            .get(rating.task_id.as_str())
            .ok_or_else(|| PairwiseError::UnknownTask(rating.task_id.clone()))?;
        for (criterion, choice) in &rating.choices {
            let slot = match (choice, run1_side) {
                (Choice::Tie, _) => 2,
                (Choice::A, Side::A) | (Choice::B, Side::B) => 0,
                _ => 1,
            };
            counts.get_mut(criterion).expect("all criteria")[slot] += 1;
        }
    }
    let criteria = counts
        .into_iter()
        .map(|(c, n)| {
            let p = percent_shares(&n);
            (c, PreferenceShare { model1: p[0], model2: p[1], tie: p[2] })
        })
        .collect();
    let mut rated: Vec<&str> = ratings.iter().map(|r| r.task_id.as_str()).collect();
    rated.sort_unstable();
    rated.dedup();
    Ok(PairwiseSummary { n_tasks: rated.len(), n_ratings: ratings.len(), criteria })
}
