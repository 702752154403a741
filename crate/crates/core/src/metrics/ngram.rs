use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{metric_tokenize, MetricsError, Score};

pub const BLEU_MAX_ORDER: usize = 4;

/// Multiset of the order-`n` n-grams of a token sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramCounts {
    pub n: usize,
    pub counts: BTreeMap<Vec<String>, usize>,
}

impl NGramCounts {
    pub fn from_tokens(tokens: &[String], n: usize) -> Self {
        let mut counts = BTreeMap::new();
        if n > 0 && tokens.len() >= n {
            for window in tokens.windows(n) {
                *counts.entry(window.to_vec()).or_insert(0) += 1;
            }
        }
        Self { n, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    /// Sum over n-grams of `min(self, other)`.
    pub fn clipped_overlap(&self, other: &NGramCounts) -> usize {
        self.counts
            .iter()
            .map(|(gram, &c)| other.counts.get(gram).map_or(0, |&o| c.min(o)))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScores {
    fn from_counts(overlap: usize, candidate_total: usize, reference_total: usize) -> Self {
        let precision = Score::from_ratio(overlap as f64, candidate_total as f64).0;
        let recall = Score::from_ratio(overlap as f64, reference_total as f64).0;
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        Self { precision, recall, f1 }
    }

    pub fn pick(&self, variant: RougeVariant) -> Score {
        Score(match variant {
            RougeVariant::Recall => self.recall,
            RougeVariant::Precision => self.precision,
            RougeVariant::F1 => self.f1,
        })
    }
}

/// Which ROUGE figure to report. Recall is the default.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RougeVariant {
    #[default]
    Recall,
    Precision,
    F1,
}

impl FromStr for RougeVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "recall" => Ok(Self::Recall),
            "precision" => Ok(Self::Precision),
            "f1" => Ok(Self::F1),
            other => Err(format!("unknown ROUGE variant `{other}` (expected recall, precision or f1)")),
        }
    }
}

pub fn rouge_n_detailed(candidate: &str, reference: &str, n: usize) -> RougeScores {
    let cand = NGramCounts::from_tokens(&metric_tokenize(candidate), n);
    let refs = NGramCounts::from_tokens(&metric_tokenize(reference), n);
    RougeScores::from_counts(cand.clipped_overlap(&refs), cand.total(), refs.total())
}

/// Clipped n-gram overlap over the reference n-gram count, ×100. Zero when
/// the reference has no n-grams of that order (including `n = 0`).
pub fn rouge_n(candidate: &str, reference: &str, n: usize) -> Score {
    rouge_n_detailed(candidate, reference, n).pick(RougeVariant::Recall)
}

pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

pub fn rouge_l_detailed(candidate: &str, reference: &str) -> RougeScores {
    let cand = metric_tokenize(candidate);
    let refs = metric_tokenize(reference);
    RougeScores::from_counts(lcs_len(&cand, &refs), cand.len(), refs.len())
}

/// LCS length over the reference length, ×100.
pub fn rouge_l(candidate: &str, reference: &str) -> Score {
    rouge_l_detailed(candidate, reference).pick(RougeVariant::Recall)
}

/// Everything needed to recompute a corpus BLEU score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuComponents {
    /// Modified precisions `p_1..p_N`.
    pub p: Vec<f64>,
    pub w: Vec<f64>,
    pub bp: f64,
    pub candidate_len: usize,
    pub reference_len: usize,
}

impl BleuComponents {
    /// `BP · exp(Σ w_n log p_n)` ×100, or 0 when any `p_n` is 0.
    pub fn score(&self) -> Score {
        if self.p.contains(&0.0) {
            return Score(0.0);
        }
        let log_sum: f64 = self.w.iter().zip(&self.p).map(|(w, p)| w * p.ln()).sum();
        Score(100.0 * self.bp * log_sum.exp())
    }
}

/// Corpus-level BLEU with uniform weights and no smoothing.
pub fn bleu<S: AsRef<str>>(
    candidates: &[S],
    references: &[S],
    max_order: usize,
) -> Result<(Score, BleuComponents), MetricsError> {
    if candidates.len() != references.len() {
        return Err(MetricsError::LengthMismatch { candidates: candidates.len(), references: references.len() });
    }
    if candidates.is_empty() || max_order == 0 {
        return Err(MetricsError::EmptyCorpus);
    }
    let mut matches = vec![0usize; max_order];
    let mut totals = vec![0usize; max_order];
    let (mut c, mut r) = (0usize, 0usize);
    for (cand, reference) in candidates.iter().zip(references) {
        let cand = metric_tokenize(cand.as_ref());
        let reference = metric_tokenize(reference.as_ref());
        c += cand.len();
        r += reference.len();
        for n in 1..=max_order {
            let cg = NGramCounts::from_tokens(&cand, n);
            let rg = NGramCounts::from_tokens(&reference, n);
            matches[n - 1] += cg.clipped_overlap(&rg);
            totals[n - 1] += cg.total();
        }
    }
    let p = matches
        .iter()
        .zip(&totals)
        .map(|(&m, &t)| if t == 0 { 0.0 } else { m as f64 / t as f64 })
        .collect();
    let bp = if c >= r {
        1.0
    } else if c == 0 {
        0.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    let components = BleuComponents {
        p,
        w: vec![1.0 / max_order as f64; max_order],
        bp,
        candidate_len: c,
        reference_len: r,
    };
    Ok((components.score(), components))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn rouge_n_examples() {
        assert_eq!(rouge_n("the cat sat", "the cat sat", 1).0, 100.0);
        assert_eq!(rouge_n("the cat", "the cat sat on mat", 1).0, 40.0);
        assert_eq!(rouge_n("a b c", "a b d", 2).0, 50.0);
        assert_eq!(rouge_n("a b", "", 1).0, 0.0);
        assert_eq!(rouge_n("a b", "a", 2).0, 0.0);
        assert_eq!(rouge_n("a", "a", 0).0, 0.0);
    }

    #[test]
    fn rouge_n_is_clipped() {
        // "the" appears once in the reference, so only one match counts
        assert_eq!(rouge_n("the the the", "the cat", 1).0, 50.0);
    }

    #[test]
    fn rouge_detailed_f1() {
        let s = rouge_n_detailed("the cat", "the cat sat on mat", 1);
        assert_eq!(s.precision, 100.0);
        assert_eq!(s.recall, 40.0);
        assert!(close(s.f1, 2.0 * 100.0 * 40.0 / 140.0, 1e-12));
        assert_eq!(s.pick(RougeVariant::F1).0, s.f1);
    }

    #[test]
    fn rouge_l_examples() {
        assert_eq!(rouge_l("a b c d", "a b c d").0, 100.0);
        assert_eq!(rouge_l("a b c d", "a c b d").0, 75.0);
        assert_eq!(rouge_l("x y", "a b").0, 0.0);
        assert_eq!(rouge_l("x y", "").0, 0.0);
    }

    #[test]
    fn bleu_examples() {
        let (s, comp) = bleu(&["the cat sat on"], &["the cat sat on the mat"], 4).unwrap();
        assert!(close(s.0, 100.0 * (-0.5f64).exp(), 1e-9));
        assert_eq!(format!("{s}"), "60.65");
        assert_eq!(comp.p, vec![1.0; 4]);
        assert_eq!((comp.candidate_len, comp.reference_len), (4, 6));

        let (s, comp) = bleu(&["x"], &["the cat"], 4).unwrap();
        assert_eq!(s.0, 0.0);
        assert_eq!(comp.p[0], 0.0);

        let refs = ["one two three four five", "six seven eight nine"];
        assert!(close(bleu(&refs, &refs, 4).unwrap().0 .0, 100.0, 1e-9));
    }

    #[test]
    fn bleu_errors() {
        assert!(matches!(bleu::<&str>(&[], &[], 4), Err(MetricsError::EmptyCorpus)));
        assert!(matches!(bleu(&["a"], &["a", "b"], 4), Err(MetricsError::LengthMismatch { .. })));
    }

    #[test]
    fn empty_candidate_corpus_scores_zero() {
        let (s, comp) = bleu(&[""], &["the cat"], 4).unwrap();
        assert_eq!(s.0, 0.0);
        assert_eq!(comp.bp, 0.0);
    }

    fn text() -> impl Strategy<Value = String> {
        proptest::collection::vec(proptest::sample::select(vec!["a", "b", "c", "d", "e"]), 0..12)
            .prop_map(|w| w.join(" "))
    }

    proptest! {
        #[test]
        fn scores_in_range(c in text(), r in text(), n in 1usize..4) {
            for s in [rouge_n(&c, &r, n), rouge_l(&c, &r)] {
                prop_assert!((0.0..=100.0).contains(&s.0));
            }
            let (s, comp) = bleu(&[&c], &[&r], 4).unwrap();
            prop_assert!((0.0..=100.0 + 1e-9).contains(&s.0));
            prop_assert!(comp.p.iter().all(|p| (0.0..=1.0).contains(p)));
            prop_assert!(close(comp.w.iter().sum::<f64>(), 1.0, 1e-12));
            prop_assert!(comp.bp <= 1.0);
        }

        #[test]
        fn identical_texts_score_full(c in text()) {
            prop_assume!(!c.is_empty());
            prop_assert_eq!(rouge_n(&c, &c, 1).0, 100.0);
            prop_assert_eq!(rouge_l(&c, &c).0, 100.0);
        }

        #[test]
        fn components_reproduce_score(c in proptest::collection::vec(text(), 1..5), r in proptest::collection::vec(text(), 1..5)) {
            let k = c.len().min(r.len());
            let (s, comp) = bleu(&c[..k], &r[..k], 4).unwrap();
            let recomputed = if comp.p.contains(&0.0) {
                0.0
            } else {
                100.0 * comp.bp * comp.w.iter().zip(&comp.p).map(|(w, p)| w * p.ln()).sum::<f64>().exp()
            };
            prop_assert!(close(s.0, recomputed, 1e-9));
        }
    }
}
