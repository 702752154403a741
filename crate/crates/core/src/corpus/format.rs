//! Line-delimited record format shared by every dataset family.
//!
//! One JSON object per line:
//!
//! ```text
//! {"id": "q1", "question": "...", "options": {"A": "...", ...},
//!  "contexts": ["..."], "answer_label": "A", "answer_text": "..."}
//! ```
//!
//! `options`, `contexts`, `answer_label` and `answer_text` are optional. An
//! optional `mode` field pins the record mode; without it the mode is
//! inferred: options present means `closed_choice`, a label without options
//! means `closed_bool`, and text-only records are `short_form` for MedQA and
//! `long_form` for every other family.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::record::{AnswerLabel, Dataset, GoldAnswer, QARecord, QaMode};
use super::CorpusError;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    id: String,
    question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mode: Option<QaMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    options: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    contexts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    answer_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    answer_text: Option<String>,
}

/// Parses a line-delimited record stream for one dataset family.
///
/// Blank lines are skipped. Parsing stops at the first bad line; line numbers
/// in errors are 1-based.
pub fn parse_dataset<R: BufRead>(format: Dataset, reader: R) -> Result<Vec<QARecord>, CorpusError> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RecordLine = serde_json::from_str(&line).map_err(|e| CorpusError::MalformedRecord {
            line: line_no,
            reason: e.to_string(),
        })?;
        let record = normalize(format, raw, line_no)?;
        if !seen.insert(record.id.clone()) {
            return Err(CorpusError::DuplicateId { id: record.id });
        }
        records.push(record);
    }
    Ok(records)
}

fn normalize(dataset: Dataset, raw: RecordLine, line: usize) -> Result<QARecord, CorpusError> {
    let malformed = |reason: &str| CorpusError::MalformedRecord {
        line,
        reason: reason.to_string(),
    };
    let unknown = |value: &str| CorpusError::UnknownLabel {
        line,
        value: value.to_string(),
    };

    if raw.id.trim().is_empty() {
        return Err(malformed("empty id"));
    }
    if raw.question.trim().is_empty() {
        return Err(malformed("empty question"));
    }

    let mut options = BTreeMap::new();
    for (key, text) in raw.options.unwrap_or_default() {
        let label: AnswerLabel = key.parse().map_err(|v: String| unknown(&v))?;
        if !label.is_letter() {
            return Err(unknown(&key));
        }
        if options.insert(label, text).is_some() {
            return Err(malformed("duplicate option label"));
        }
    }

    let label = match raw.answer_label.as_deref() {
        Some(value) => Some(value.parse::<AnswerLabel>().map_err(|v| unknown(&v))?),
        None => None,
    };
    let text = raw.answer_text;

    let mode = match raw.mode {
        Some(mode) => mode,
        None if !options.is_empty() => QaMode::ClosedChoice,
        None if label.is_some() => QaMode::ClosedBool,
        None if dataset == Dataset::Medqa => QaMode::ShortForm,
        None => QaMode::LongForm,
    };

    match mode {
        QaMode::ClosedChoice => {
            if options.is_empty() {
                return Err(malformed("closed_choice record without options"));
            }
            let label = label.ok_or_else(|| malformed("closed_choice record without answer_label"))?;
            if !options.contains_key(&label) {
                return Err(unknown(label.as_str()));
            }
        }
        QaMode::ClosedBool => {
            if !options.is_empty() {
                return Err(malformed("closed_bool record must not carry options"));
            }
            let label = label.ok_or_else(|| malformed("closed_bool record without answer_label"))?;
            if !dataset.bool_labels().contains(&label) {
                return Err(unknown(label.as_str()));
            }
        }
        QaMode::LongForm | QaMode::ShortForm => {
            if !options.is_empty() {
                return Err(malformed("free-text record must not carry options"));
            }
            if text.as_deref().is_none_or(|t| t.trim().is_empty()) {
                return Err(malformed("free-text record without answer_text"));
            }
        }
    }

    Ok(QARecord {
        id: raw.id,
        dataset,
        mode,
        question: raw.question,
        options,
        contexts: raw.contexts,
        gold: GoldAnswer { label, text },
    })
}

/// Writes records in the line format read by [`parse_dataset`]. The mode is
/// always written out so re-parsing never depends on inference.
pub fn write_records<W: Write>(records: &[QARecord], mut writer: W) -> Result<(), CorpusError> {
    for record in records {
        let line = RecordLine {
            id: record.id.clone(),
            question: record.question.clone(),
            mode: Some(record.mode),
            options: (!record.options.is_empty()).then(|| {
                record
                    .options
                    .iter()
                    .map(|(k, v)| (k.to_string(), v.clone()))
                    .collect()
            }),
            contexts: record.contexts.clone(),
            answer_label: record.gold.label.map(|l| l.to_string()),
            answer_text: record.gold.text.clone(),
        };
        serde_json::to_writer(&mut writer, &line).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(format: Dataset, text: &str) -> Result<Vec<QARecord>, CorpusError> {
        parse_dataset(format, text.as_bytes())
    }

    #[test]
    fn single_choice_record() {
        let recs = parse(
            Dataset::Medqa,
            r#"{"id":"q1","question":"Which drug?","options":{"A":"Aspirin","B":"Heparin","C":"Warfarin","D":"Insulin"},"answer_label":"A"}"#,
        )
        .unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].mode, QaMode::ClosedChoice);
        assert_eq!(recs[0].gold.label, Some(AnswerLabel::A));
        assert_eq!(recs[0].options.len(), 4);
    }

    #[test]
    fn pubmedqa_accepts_maybe_but_bioasq_does_not() {
        let line = r#"{"id":"p1","question":"Does it work?","contexts":["abstract"],"answer_label":"maybe"}"#;
        let recs = parse(Dataset::PubmedqaL, line).unwrap();
        assert_eq!(recs[0].mode, QaMode::ClosedBool);
        assert_eq!(recs[0].gold.label, Some(AnswerLabel::Maybe));

        let err = parse(Dataset::Bioasq, line).unwrap_err();
        assert!(matches!(err, CorpusError::UnknownLabel { ref value, .. } if value == "maybe"), "{err:?}");
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "{\"id\":\"a\",\"question\":\"q\",\"answer_text\":\"t\"}\n\nnot json\n";
        match parse(Dataset::Liveqa, text).unwrap_err() {
            CorpusError::MalformedRecord { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = "{\"id\":\"a\",\"question\":\"q\",\"answer_text\":\"t\"}\n{\"id\":\"a\",\"question\":\"q2\",\"answer_text\":\"t\"}\n";
        assert!(matches!(parse(Dataset::Liveqa, text), Err(CorpusError::DuplicateId { id }) if id == "a"));
    }

    #[test]
    fn gold_must_be_an_option() {
        let line = r#"{"id":"q","question":"?","options":{"A":"x","B":"y"},"answer_label":"C"}"#;
        assert!(matches!(parse(Dataset::Medqa, line), Err(CorpusError::UnknownLabel { .. })));
        let line = r#"{"id":"q","question":"?","options":{"E":"x"},"answer_label":"A"}"#;
        assert!(matches!(parse(Dataset::Medqa, line), Err(CorpusError::UnknownLabel { .. })));
    }

    #[test]
    fn mode_inference_for_text_records() {
        let line = r#"{"id":"s","question":"?","answer_text":"Aspirin"}"#;
        assert_eq!(parse(Dataset::Medqa, line).unwrap()[0].mode, QaMode::ShortForm);
        assert_eq!(parse(Dataset::Medicationqa, line).unwrap()[0].mode, QaMode::LongForm);
        let pinned = r#"{"id":"s","question":"?","mode":"long_form","answer_text":"Aspirin"}"#;
        assert_eq!(parse(Dataset::Medqa, pinned).unwrap()[0].mode, QaMode::LongForm);
    }

    #[test]
    fn free_text_requires_answer_text() {
        let line = r#"{"id":"s","question":"?","mode":"long_form","answer_text":"  "}"#;
        assert!(matches!(parse(Dataset::Liveqa, line), Err(CorpusError::MalformedRecord { line: 1, .. })));
    }

    #[test]
    fn unknown_fields_are_malformed() {
        let line = r#"{"id":"s","question":"?","answer_text":"x","answr":"typo"}"#;
        assert!(matches!(parse(Dataset::Liveqa, line), Err(CorpusError::MalformedRecord { .. })));
    }
}
