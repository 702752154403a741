use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{CorpusError, QARecord, QaMode};
use crate::llm::Role;
use crate::prompts::{assemble, PromptProfile};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: Role,
    pub content: String,
}

/// One chat-format training example: system, user and assistant turns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatExample {
    pub messages: Vec<ChatTurn>,
}

/// Assistant turn a record trains towards: the option letter, the lowercase
/// boolean word, or the reference text verbatim.
pub fn render_assistant_turn(record: &QARecord) -> Result<String, CorpusError> {
    let unrenderable = |reason: &str| CorpusError::UnrenderableRecord {
        id: record.id.clone(),
        reason: reason.to_string(),
    };
    match record.mode {
        QaMode::ClosedChoice => match record.gold.label {
            Some(l) if l.is_letter() => Ok(l.to_string()),
            _ => Err(unrenderable("missing option letter")),
        },
        QaMode::ClosedBool => match record.gold.label {
            Some(l) if !l.is_letter() => Ok(l.as_str().to_lowercase()),
            _ => Err(unrenderable("missing yes/no/maybe label")),
        },
        QaMode::LongForm | QaMode::ShortForm => record
            .gold
            .text
            .clone()
            .filter(|t| !t.trim().is_empty())
            .ok_or_else(|| unrenderable("missing reference answer text")),
    }
}

/// Writes one training example per record and returns the count. Nothing is
/// written unless every record renders.
pub fn export_finetune_file<W: Write>(
    records: &[QARecord],
    profile: &PromptProfile,
    mut sink: W,
) -> Result<usize, CorpusError> {
    let mut lines = Vec::with_capacity(records.len());
    for record in records {
        let assistant = render_assistant_turn(record)?;
        let prompt = assemble(profile, record, None).map_err(|e| CorpusError::UnrenderableRecord {
            id: record.id.clone(),
            reason: e.to_string(),
        })?;
        let example = ChatExample {
            messages: vec![
                ChatTurn { role: Role::System, content: prompt.system_message },
                ChatTurn { role: Role::User, content: prompt.user_message },
                ChatTurn { role: Role::Assistant, content: assistant },
            ],
        };
        lines.push(serde_json::to_string(&example).map_err(std::io::Error::from)?);
    }
    for line in &lines {
        sink.write_all(line.as_bytes())?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(lines.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AnswerLabel, Dataset, GoldAnswer};
    use crate::prompts::{profile_for, ProfileMode, CLOSED_SYSTEM_MESSAGE};
    use std::collections::BTreeMap;

    fn closed() -> QARecord {
        QARecord {
            id: "q1".into(),
            dataset: Dataset::Medqa,
            mode: QaMode::ClosedChoice,
            question: "Which?".into(),
            options: [(AnswerLabel::A, "x"), (AnswerLabel::B, "y"), (AnswerLabel::C, "z"), (AnswerLabel::D, "w")]
                .into_iter()
                .map(|(k, v)| (k, v.to_string()))
                .collect(),
            contexts: vec![],
            gold: GoldAnswer { label: Some(AnswerLabel::A), text: None },
        }
    }

    #[test]
    fn closed_record_exports_bare_letter() {
        let mut out = Vec::new();
        let n = export_finetune_file(&[closed()], &profile_for(ProfileMode::Closed), &mut out).unwrap();
        assert_eq!(n, 1);
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 1);
        let ex: ChatExample = serde_json::from_str(text.trim()).unwrap();
        assert_eq!(ex.messages.len(), 3);
        assert_eq!(ex.messages[0].content, CLOSED_SYSTEM_MESSAGE);
        assert_eq!(ex.messages[2].role, Role::Assistant);
        assert_eq!(ex.messages[2].content, "A");
        let raw: serde_json::Value = serde_json::from_str(text.trim()).unwrap();
        assert_eq!(raw["messages"][0]["role"], "system");
    }

    #[test]
    fn bool_label_is_lowercase_word() {
        let mut r = closed();
        r.mode = QaMode::ClosedBool;
        r.dataset = Dataset::PubmedqaL;
        r.options = BTreeMap::new();
        r.gold.label = Some(AnswerLabel::Maybe);
        assert_eq!(render_assistant_turn(&r).unwrap(), "maybe");
    }

    #[test]
    fn empty_input_writes_nothing() {
        let mut out = Vec::new();
        assert_eq!(export_finetune_file(&[], &profile_for(ProfileMode::LongForm), &mut out).unwrap(), 0);
        assert!(out.is_empty());
    }

    #[test]
    fn long_form_without_text_is_unrenderable() {
        let r = QARecord {
            id: "l1".into(),
            dataset: Dataset::Liveqa,
            mode: QaMode::LongForm,
            question: "Explain.".into(),
            options: BTreeMap::new(),
            contexts: vec![],
            gold: GoldAnswer { label: None, text: None },
        };
        let mut out = Vec::new();
        let err = export_finetune_file(&[r], &profile_for(ProfileMode::LongForm), &mut out).unwrap_err();
        assert!(matches!(err, CorpusError::UnrenderableRecord { ref id, .. } if id == "l1"));
        assert!(out.is_empty());
    }

    #[test]
    fn profile_mismatch_is_unrenderable() {
        let mut out = Vec::new();
        let err = export_finetune_file(&[closed()], &profile_for(ProfileMode::ShortForm), &mut out).unwrap_err();
        assert!(matches!(err, CorpusError::UnrenderableRecord { .. }));
    }
}
