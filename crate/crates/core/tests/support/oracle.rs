//! Brute-force reference implementations of the lexical metrics. Written
//! directly from the definitions with no shared code: n-grams are counted
//! by rescanning, LCS by memoized recursion, BLEU via a product of
//! precisions.

use std::collections::HashMap;

pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(|t| t.to_lowercase()).collect()
}

fn occurrences(gram: &[String], seq: &[String]) -> usize {
    if gram.is_empty() || seq.len() < gram.len() {
        return 0;
    }
    (0..=seq.len() - gram.len()).filter(|&i| &seq[i..i + gram.len()] == gram).count()
}

fn distinct_grams(seq: &[String], n: usize) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<String>> = Vec::new();
    if n == 0 || seq.len() < n {
        return out;
    }
    for i in 0..=seq.len() - n {
        let g = seq[i..i + n].to_vec();
        if !out.contains(&g) {
            out.push(g);
        }
    }
    out
}

/// `(Σ_g min(count_cand(g), count_ref(g)), total candidate n-grams, total reference n-grams)`
pub fn clipped(cand: &[String], reference: &[String], n: usize) -> (usize, usize, usize) {
    let matched = distinct_grams(cand, n)
        .iter()
        .map(|g| occurrences(g, cand).min(occurrences(g, reference)))
        .sum();
    let total = |s: &[String]| if s.len() >= n && n > 0 { s.len() - n + 1 } else { 0 };
    (matched, total(cand), total(reference))
}

pub fn rouge_n(cand: &str, reference: &str, n: usize) -> f64 {
    let (m, _, r) = clipped(&tokens(cand), &tokens(reference), n);
    if r == 0 {
        0.0
    } else {
        100.0 * m as f64 / r as f64
    }
}

fn lcs(a: &[String], b: &[String], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
    if i == a.len() || j == b.len() {
        return 0;
    }
    if let Some(&v) = memo.get(&(i, j)) {
        return v;
    }
    let v = if a[i] == b[j] {
        1 + lcs(a, b, i + 1, j + 1, memo)
    } else {
        lcs(a, b, i + 1, j, memo).max(lcs(a, b, i, j + 1, memo))
    };
    memo.insert((i, j), v);
    v
}

pub fn rouge_l(cand: &str, reference: &str) -> f64 {
    let (c, r) = (tokens(cand), tokens(reference));
    if r.is_empty() {
        return 0.0;
    }
    100.0 * lcs(&c, &r, 0, 0, &mut HashMap::new()) as f64 / r.len() as f64
}

/// Corpus BLEU-4, uniform weights, no smoothing.
pub fn bleu(cands: &[String], refs: &[String]) -> f64 {
    let mut num = [0usize; 4];
    let mut den = [0usize; 4];
    let (mut c_len, mut r_len) = (0usize, 0usize);
    for (c, r) in cands.iter().zip(refs) {
        let (c, r) = (tokens(c), tokens(r));
        c_len += c.len();
        r_len += r.len();
        for n in 1..=4 {
            let (m, t, _) = clipped(&c, &r, n);
            num[n - 1] += m;
            den[n - 1] += t;
        }
    }
    if num.iter().zip(&den).any(|(&m, &t)| t == 0 || m == 0) {
        return 0.0;
    }
    let product: f64 = num.iter().zip(&den).map(|(&m, &t)| m as f64 / t as f64).product();
    let bp = if c_len > r_len { 1.0 } else { (1.0 - r_len as f64 / c_len as f64).exp() };
    100.0 * bp * product.powf(0.25)
}
