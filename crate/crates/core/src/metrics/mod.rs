//! Lexical evaluation metrics, response distributions and the adapter for
//! out-of-process semantic scorers.
//!
//! All lexical scores are reported on a 0–100 scale.

mod distribution;
mod external;
mod ngram;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::AnswerLabel;

pub use distribution::{percent_shares, response_distribution, DistributionRow, DistributionTable, UNPARSEABLE};
pub use external::{escape_field, external_score, unescape_field, ExternalScorer, ScorerTransport};
pub use ngram::{
    bleu, lcs_len, rouge_l, rouge_l_detailed, rouge_n, rouge_n_detailed, BleuComponents, NGramCounts, RougeScores,
    RougeVariant, BLEU_MAX_ORDER,
};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("length mismatch: {candidates} candidates vs {references} references")]
    LengthMismatch { candidates: usize, references: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("input is empty")]
    EmptyInput,
    #[error("`{0}` is not an answer label")]
    InvalidLabel(String),
    #[error("scorer `{name}` unavailable: {reason}")]
    ScorerUnavailable { name: String, reason: String },
    #[error("scorer `{name}` violated the line protocol: {reason}")]
    ProtocolViolation { name: String, reason: String },
}

/// A metric value. Lexical metrics lie in [0, 100]; external scorer values
/// are their raw mean ×100 and may be negative.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Score(pub f64);

impl Score {
    pub fn value(self) -> f64 {
        self.0
    }

    /// Fraction in [0, 1] scaled to a score.
    pub fn from_ratio(num: f64, den: f64) -> Self {
        if den == 0.0 {
            Score(0.0)
        } else {
            Score(100.0 * num / den)
        }
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2}", self.0)
    }
}

/// Lowercases and splits on runs of non-alphanumeric characters. No
/// stopword removal or stemming.
pub fn metric_tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Exact label matches over all items; `None` predictions never match.
pub fn accuracy(predictions: &[Option<AnswerLabel>], golds: &[AnswerLabel]) -> Result<Score, MetricsError> {
    if predictions.len() != golds.len() {
        return Err(MetricsError::LengthMismatch { candidates: predictions.len(), references: golds.len() });
    }
    if golds.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let hits = predictions.iter().zip(golds).filter(|(p, g)| **p == Some(**g)).count();
    Ok(Score::from_ratio(hits as f64, golds.len() as f64))
}

/// Metrics selectable by name over a parallel list of segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorpusMetric {
    #[serde(rename = "rouge1")]
    Rouge1,
    #[serde(rename = "rouge2")]
    Rouge2,
    #[serde(rename = "rougeL")]
    RougeL,
    #[serde(rename = "bleu")]
    Bleu,
    #[serde(rename = "accuracy")]
    Accuracy,
}

impl CorpusMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            CorpusMetric::Rouge1 => "rouge1",
            CorpusMetric::Rouge2 => "rouge2",
            CorpusMetric::RougeL => "rougeL",
            CorpusMetric::Bleu => "bleu",
            CorpusMetric::Accuracy => "accuracy",
        }
    }
}

impl FromStr for CorpusMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Self::Rouge1, Self::Rouge2, Self::RougeL, Self::Bleu, Self::Accuracy]
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown metric `{s}` (expected rouge1, rouge2, rougeL, bleu or accuracy)"))
    }
}

/// Scores parallel candidate/reference segments.
///
/// ROUGE is the mean of per-segment scores; BLEU is corpus-level and also
/// returns its components. For accuracy each segment is a label; candidates
/// that are not labels count as wrong, references must be labels.
pub fn score_corpus<S: AsRef<str>>(
    metric: CorpusMetric,
    candidates: &[S],
    references: &[S],
    variant: RougeVariant,
) -> Result<(Score, Option<BleuComponents>), MetricsError> {
    if candidates.len() != references.len() {
        return Err(MetricsError::LengthMismatch { candidates: candidates.len(), references: references.len() });
    }
    if candidates.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let pairs = candidates.iter().zip(references).map(|(c, r)| (c.as_ref(), r.as_ref()));
    let mean = |f: &dyn Fn(&str, &str) -> f64| Score(pairs.clone().map(|(c, r)| f(c, r)).sum::<f64>() / candidates.len() as f64);
    Ok(match metric {
        CorpusMetric::Rouge1 => (mean(&|c, r| rouge_n_detailed(c, r, 1).pick(variant).0), None),
        CorpusMetric::Rouge2 => (mean(&|c, r| rouge_n_detailed(c, r, 2).pick(variant).0), None),
        CorpusMetric::RougeL => (mean(&|c, r| rouge_l_detailed(c, r).pick(variant).0), None),
        CorpusMetric::Bleu => {
            let (score, components) = bleu(candidates, references, BLEU_MAX_ORDER)?;
            (score, Some(components))
        }
        CorpusMetric::Accuracy => {
            let preds: Vec<Option<AnswerLabel>> = candidates.iter().map(|c| c.as_ref().trim().parse().ok()).collect();
            let golds: Vec<AnswerLabel> = references
                .iter()
                .map(|r| r.as_ref().trim().parse().map_err(|_| MetricsError::InvalidLabel(r.as_ref().to_string())))
                .collect::<Result<_, _>>()?;
            (accuracy(&preds, &golds)?, None)
        }
    })
}
