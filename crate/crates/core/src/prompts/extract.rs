use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{AnswerLabel, QaMode};

/// Normalized answer pulled out of a raw completion.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractedAnswer {
    Label(AnswerLabel),
    Text(String),
    /// No candidate label found. Scored as incorrect, never dropped.
    Unparseable,
}

impl ExtractedAnswer {
    pub fn label(&self) -> Option<AnswerLabel> {
        match self {
            ExtractedAnswer::Label(l) => Some(*l),
            _ => None,
        }
    }

    pub fn text(&self) -> &str {
        match self {
            ExtractedAnswer::Label(l) => l.as_str(),
            ExtractedAnswer::Text(t) => t,
            ExtractedAnswer::Unparseable => "",
        }
    }
}

impl fmt::Display for ExtractedAnswer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtractedAnswer::Unparseable => f.write_str("<unparseable>"),
            other => f.write_str(other.text()),
        }
    }
}

fn words(raw: &str) -> impl Iterator<Item = &str> {
    raw.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty())
}

/// Closed choice: first standalone uppercase A-D letter, else the first in
/// any case ("B) Aspirin" → B, "The answer is C." → C, "b" → B). Closed bool: first of yes/no/maybe as a whole
/// word. Free-text modes: the trimmed completion.
pub fn extract_answer(mode: QaMode, raw: &str) -> ExtractedAnswer {
    let found = match mode {
        QaMode::ClosedChoice => {
            let letter = |w: &str, any_case: bool| {
                let mut chars = w.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) if any_case || c.is_ascii_uppercase() => match c.to_ascii_uppercase() {
                        'A' => Some(AnswerLabel::A),
                        'B' => Some(AnswerLabel::B),
                        'C' => Some(AnswerLabel::C),
                        'D' => Some(AnswerLabel::D),
                        _ => None,
                    },
                    _ => None,
                }
            };
            // an uppercase letter wins over a lowercase one so the article "a" is skipped
            words(raw).find_map(|w| letter(w, false)).or_else(|| words(raw).find_map(|w| letter(w, true)))
        }
        QaMode::ClosedBool => words(raw).find_map(|w| match w.to_lowercase().as_str() {
            "yes" => Some(AnswerLabel::Yes),
            "no" => Some(AnswerLabel::No),
            "maybe" => Some(AnswerLabel::Maybe),
            _ => None,
        }),
        QaMode::LongForm | QaMode::ShortForm => return ExtractedAnswer::Text(raw.trim().to_string()),
    };
    found.map_or(ExtractedAnswer::Unparseable, ExtractedAnswer::Label)
}
