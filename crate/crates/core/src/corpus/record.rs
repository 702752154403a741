use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Source dataset family of a record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dataset {
    Medqa,
    PubmedqaL,
    PubmedqaA,
    Bioasq,
    Liveqa,
    Medicationqa,
    Custom,
}

impl Dataset {
    pub const ALL: [Dataset; 7] = [
        Dataset::Medqa,
        Dataset::PubmedqaL,
        Dataset::PubmedqaA,
        Dataset::Bioasq,
        Dataset::Liveqa,
        Dataset::Medicationqa,
        Dataset::Custom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dataset::Medqa => "medqa",
            Dataset::PubmedqaL => "pubmedqa_l",
            Dataset::PubmedqaA => "pubmedqa_a",
            Dataset::Bioasq => "bioasq",
            Dataset::Liveqa => "liveqa",
            Dataset::Medicationqa => "medicationqa",
            Dataset::Custom => "custom",
        }
    }

    /// Boolean labels a closed_bool record of this family may carry.
    pub fn bool_labels(self) -> &'static [AnswerLabel] {
        match self {
            Dataset::PubmedqaL => &[AnswerLabel::Yes, AnswerLabel::No, AnswerLabel::Maybe],
            _ => &[AnswerLabel::Yes, AnswerLabel::No],
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dataset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Dataset::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown dataset format `{s}`"))
    }
}

/// Answer format of a single record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QaMode {
    ClosedChoice,
    ClosedBool,
    LongForm,
    ShortForm,
}

impl QaMode {
    pub fn is_closed(self) -> bool {
        matches!(self, QaMode::ClosedChoice | QaMode::ClosedBool)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            QaMode::ClosedChoice => "closed_choice",
            QaMode::ClosedBool => "closed_bool",
            QaMode::LongForm => "long_form",
            QaMode::ShortForm => "short_form",
        }
    }
}

impl FromStr for QaMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "closed_choice" => Ok(QaMode::ClosedChoice),
            "closed_bool" => Ok(QaMode::ClosedBool),
            "long_form" => Ok(QaMode::LongForm),
            "short_form" => Ok(QaMode::ShortForm),
            other => Err(format!("unknown record mode `{other}`")),
        }
    }
}

/// Closed-set answer label: an option letter or a boolean word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AnswerLabel {
    A,
    B,
    C,
    D,
    #[serde(rename = "yes")]
    Yes,
    #[serde(rename = "no")]
    No,
    #[serde(rename = "maybe")]
    Maybe,
}

impl AnswerLabel {
    pub const LETTERS: [AnswerLabel; 4] = [AnswerLabel::A, AnswerLabel::B, AnswerLabel::C, AnswerLabel::D];
    pub const BOOLEANS: [AnswerLabel; 3] = [AnswerLabel::Yes, AnswerLabel::No, AnswerLabel::Maybe];

    pub fn is_letter(self) -> bool {
        matches!(self, AnswerLabel::A | AnswerLabel::B | AnswerLabel::C | AnswerLabel::D)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AnswerLabel::A => "A",
            AnswerLabel::B => "B",
            AnswerLabel::C => "C",
            AnswerLabel::D => "D",
            AnswerLabel::Yes => "yes",
            AnswerLabel::No => "no",
            AnswerLabel::Maybe => "maybe",
        }
    }
}

impl fmt::Display for AnswerLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnswerLabel {
    type Err = String;

    /// Case-insensitive; surrounding whitespace is ignored.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let label = match t.to_ascii_lowercase().as_str() {
            "a" => AnswerLabel::A,
            "b" => AnswerLabel::B,
            "c" => AnswerLabel::C,
            "d" => AnswerLabel::D,
            "yes" => AnswerLabel::Yes,
            "no" => AnswerLabel::No,
            "maybe" => AnswerLabel::Maybe,
            _ => return Err(t.to_string()),
        };
        Ok(label)
    }
}

/// Reference answer. At least one of `label` and `text` is present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAnswer {
    pub label: Option<AnswerLabel>,
    pub text: Option<String>,
}

/// One normalized question/answer item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QARecord {
    pub id: String,
    pub dataset: Dataset,
    pub mode: QaMode,
    pub question: String,
    /// Present (non-empty) iff `mode` is `ClosedChoice`; keys are option letters.
    pub options: BTreeMap<AnswerLabel, String>,
    pub contexts: Vec<String>,
    pub gold: GoldAnswer,
}

impl QARecord {
    /// Text that stands in for the record's answer field when it is indexed
    /// or rendered: the gold text, or the labeled option / label word.
    pub fn answer_text(&self) -> Option<String> {
        if let Some(text) = self.gold.text.as_deref().filter(|t| !t.trim().is_empty()) {
            return Some(text.to_string());
        }
        let label = self.gold.label?;
        match self.options.get(&label) {
            Some(option) => Some(format!("{label}. {option}")),
            None => Some(label.to_string()),
        }
    }
}
