use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{RunConfig, RunError};
use crate::corpus::{AnswerLabel, Dataset, GoldAnswer, QaMode};
use crate::llm::FinishReason;
use crate::metrics::{
    accuracy, bleu, response_distribution, rouge_l_detailed, rouge_n_detailed, DistributionTable, MetricsError,
    RougeVariant, BLEU_MAX_ORDER,
};
use crate::prompts::PromptProfile;

pub const REPORT_FORMAT: &str = "bioqa-report";
pub const REPORT_VERSION: u32 = 1;

pub const ACCURACY: &str = "accuracy";
pub const ROUGE1: &str = "rouge1";
pub const ROUGE2: &str = "rouge2";
pub const ROUGEL: &str = "rougeL";
pub const BLEU: &str = "bleu";
/// Per-record 0/1 flag for closed modes.
pub const CORRECT: &str = "correct";

/// Aggregate names produced by the harness itself, in display order.
pub const BUILTIN_METRICS: [&str; 5] = [ACCURACY, ROUGE1, ROUGE2, ROUGEL, BLEU];

/// Everything that happened to one record during a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordLog {
    pub id: String,
    pub question: String,
    /// Hex SHA-256 of the request messages.
    pub prompt_hash: String,
    /// Retrieved chunk ids in rank order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub retrieved: Vec<String>,
    pub raw_response: Option<String>,
    pub finish_reason: Option<FinishReason>,
    /// Normalized label for closed modes, answer text otherwise. `None` when
    /// nothing could be extracted.
    pub extracted: Option<String>,
    pub gold: GoldAnswer,
    pub scores: BTreeMap<String, f64>,
    pub error: Option<String>,
}

impl RecordLog {
    pub fn predicted_label(&self) -> Option<AnswerLabel> {
        self.extracted.as_deref().and_then(|e| e.parse().ok())
    }

    /// Candidate text for free-text metrics; empty when the record failed.
    pub fn candidate_text(&self) -> &str {
        self.extracted.as_deref().unwrap_or("")
    }

    pub fn reference_text(&self) -> &str {
        self.gold.text.as_deref().unwrap_or("")
    }
}

/// Persisted outcome of one evaluation run. Contains no timings, so reruns
/// of the same config against a mock backend are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub format: String,
    pub version: u32,
    pub label: String,
    /// Hex SHA-256 over the config and the effective profile.
    pub fingerprint: String,
    pub config: RunConfig,
    pub profile: PromptProfile,
    pub dataset: Dataset,
    pub mode: QaMode,
    pub n: usize,
    pub failures: usize,
    pub aggregates: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<DistributionTable>,
    pub records: Vec<RecordLog>,
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, RunError> {
        let report: MetricReport = serde_json::from_str(text).map_err(|e| RunError::Report(e.to_string()))?;
        if report.format != REPORT_FORMAT {
            return Err(RunError::Report(format!("not a report file (format `{}`)", report.format)));
        }
        if report.version != REPORT_VERSION {
            return Err(RunError::Report(format!("unsupported report version {}", report.version)));
        }
        Ok(report)
    }

    pub fn save(&self, path: &Path) -> Result<(), RunError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| RunError::io(parent, e))?;
        }
        std::fs::write(path, self.to_json()).map_err(|e| RunError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn scorer_names(&self) -> Vec<String> {
        self.config.metrics.scorers.iter().map(|s| s.name.clone()).collect()
    }

    /// Aggregates and distribution rebuilt from the per-record log alone.
    pub fn recompute_aggregates(&self) -> Result<(BTreeMap<String, f64>, Option<DistributionTable>), MetricsError> {
        compute_aggregates(&self.records, self.dataset, self.mode, self.config.metrics.rouge, &self.scorer_names())
    }
}

/// Per-record ROUGE scores for free-text modes.
pub(crate) fn text_scores(candidate: &str, reference: &str, variant: RougeVariant) -> [(&'static str, f64); 3] {
    [
        (ROUGE1, rouge_n_detailed(candidate, reference, 1).pick(variant).0),
        (ROUGE2, rouge_n_detailed(candidate, reference, 2).pick(variant).0),
        (ROUGEL, rouge_l_detailed(candidate, reference).pick(variant).0),
    ]
}

/// Run-level metrics from per-record logs.
///
/// Closed modes report accuracy (and a label distribution for boolean
/// runs). Free-text modes report mean per-record ROUGE, corpus BLEU and the
/// mean of each external scorer's per-record values.
pub fn compute_aggregates(
    records: &[RecordLog],
    dataset: Dataset,
    mode: QaMode,
    rouge: RougeVariant,
    scorers: &[String],
) -> Result<(BTreeMap<String, f64>, Option<DistributionTable>), MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut out = BTreeMap::new();
    let mut distribution = None;
    if mode.is_closed() {
        let preds: Vec<Option<AnswerLabel>> = records.iter().map(RecordLog::predicted_label).collect();
        let golds: Vec<AnswerLabel> = records
            .iter()
            .map(|r| r.gold.label.ok_or(MetricsError::EmptyInput))
            .collect::<Result<_, _>>()?;
        out.insert(ACCURACY.to_string(), accuracy(&preds, &golds)?.0);
        if mode == QaMode::ClosedBool {
            distribution = Some(response_distribution(&preds, dataset.bool_labels())?);
        }
    } else {
        let n = records.len() as f64;
        let mut sums = [0.0f64; 3];
        for r in records {
            for (slot, (_, v)) in sums.iter_mut().zip(text_scores(r.candidate_text(), r.reference_text(), rouge)) {
                *slot += v;
            }
        }
        for (name, sum) in [ROUGE1, ROUGE2, ROUGEL].into_iter().zip(sums) {
            out.insert(name.to_string(), sum / n);
        }
        let cands: Vec<&str> = records.iter().map(RecordLog::candidate_text).collect();
        let refs: Vec<&str> = records.iter().map(RecordLog::reference_text).collect();
        out.insert(BLEU.to_string(), bleu(&cands, &refs, BLEU_MAX_ORDER)?.0 .0);
        for name in scorers {
            let total: f64 = records.iter().map(|r| r.scores.get(name).copied().unwrap_or(0.0)).sum();
            out.insert(name.clone(), total / n);
        }
    }
    Ok((out, distribution))
}
