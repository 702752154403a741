use std::collections::HashSet;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use super::porter;

/// English stopword list (the classic 33-word Lucene set), one word per line.
pub const STOPWORDS_EN: &str = include_str!("stopwords_en.txt");

fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| STOPWORDS_EN.lines().map(str::trim).filter(|w| !w.is_empty()).collect())
}

pub fn is_stopword(word: &str) -> bool {
    stopwords().contains(word)
}

/// Normalized terms of a text, in order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSequence(pub Vec<String>);

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

/// Index term for one segmented word, or `None` for stopwords.
pub(crate) fn normalize_word(word: &str) -> Option<String> {
    let lower = word.to_lowercase();
    if is_stopword(&lower) {
        return None;
    }
    Some(porter::stem(&lower))
}

/// Word segments with surrounding whitespace removed. The segmenter's tables
/// can lag std's, leaving a new combining mark glued to a preceding space.
fn words(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.unicode_word_indices().filter_map(|(start, word)| {
        let trimmed = word.trim_start();
        let start = start + (word.len() - trimmed.len());
        let trimmed = trimmed.trim_end();
        (!trimmed.is_empty()).then_some((start, trimmed))
    })
}

/// Word segmentation, lowercasing, stopword removal, Porter stemming.
pub fn analyze(text: &str) -> TokenSequence {
    TokenSequence(words(text).filter_map(|(_, w)| normalize_word(w)).collect())
}

/// Kept tokens with their byte spans in `text`.
pub(crate) fn analyze_with_spans(text: &str) -> Vec<(usize, usize, String)> {
    words(text)
        .filter_map(|(start, word)| normalize_word(word).map(|t| (start, start + word.len(), t)))
        .collect()
}
