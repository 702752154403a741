use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::corpus::AnswerLabel;

/// Row label for predictions that did not parse to any label.
pub const UNPARSEABLE: &str = "unparseable";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub label: String,
    pub count: usize,
    /// Share ×100, rounded to hundredths.
    pub percent: f64,
}

/// Per-label share of predictions. Rows follow the label set order, then
/// any unexpected labels, then the unparseable row when present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionTable {
    pub n: usize,
    pub rows: Vec<DistributionRow>,
}

impl DistributionTable {
    pub fn percent(&self, label: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.label == label).map(|r| r.percent)
    }

    /// Percentages joined with ` / ` in row order.
    pub fn summary(&self) -> String {
        self.rows.iter().map(|r| format!("{:.2}", r.percent)).collect::<Vec<_>>().join(" / ")
    }
}

/// Shares of each label among `predictions` (`None` = unparseable).
///
/// Percentages use largest-remainder rounding to hundredths, so the rows
/// always add up to exactly 100.00.
pub fn response_distribution(
    predictions: &[Option<AnswerLabel>],
    label_set: &[AnswerLabel],
) -> Result<DistributionTable, MetricsError> {
    if predictions.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut labels: Vec<AnswerLabel> = label_set.to_vec();
    for p in predictions.iter().flatten() {
        if !labels.contains(p) {
            labels.push(*p);
        }
    }
    let mut counts: Vec<(String, usize)> = labels
        .iter()
        .map(|l| (l.as_str().to_lowercase(), predictions.iter().filter(|p| **p == Some(*l)).count()))
        .collect();
    let unparseable = predictions.iter().filter(|p| p.is_none()).count();
    if unparseable > 0 {
        counts.push((UNPARSEABLE.to_string(), unparseable));
    }

    let n = predictions.len();
    let shares = percent_shares(&counts.iter().map(|(_, c)| *c).collect::<Vec<_>>());
    let rows = counts
        .into_iter()
        .zip(shares)
        .map(|((label, count), percent)| DistributionRow { label, count, percent })
        .collect();
    Ok(DistributionTable { n, rows })
}

/// Percentages of `counts` rounded to hundredths by largest remainder, so
/// they sum to exactly 100 whenever the total is non-zero. Ties in the
/// remainder favour earlier entries.
pub fn percent_shares(counts: &[usize]) -> Vec<f64> {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return vec![0.0; counts.len()];
    }
    const SCALE: usize = 10_000;
    let mut hundredths: Vec<usize> = counts.iter().map(|c| c * SCALE / n).collect();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(counts[i] * SCALE % n));
    let short = SCALE - hundredths.iter().sum::<usize>();
    for &i in order.iter().take(short) {
        hundredths[i] += 1;
    }
    hundredths.into_iter().map(|h| h as f64 / 100.0).collect()
}
