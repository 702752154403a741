//! QA-mode prompt profiles, user-prompt assembly and answer extraction.

mod assemble;
mod extract;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::QaMode;
use crate::llm::DecodingParams;

pub use assemble::{assemble, PromptInstance, RetrievedChunk};
pub use extract::{extract_answer, ExtractedAnswer};

pub const CLOSED_SYSTEM_MESSAGE: &str =
    "You are an expert medical AI assistant. Answer the following question using only one letter: A, B, C, or D.";
pub const BOOLEAN_SYSTEM_MESSAGE: &str =
    "You are an expert medical AI assistant. Answer the following question using only one word: Yes, No, or Maybe.";
pub const LONG_FORM_SYSTEM_MESSAGE: &str =
    "You are a biomedical research expert. Generate precise and well-structured answers.";
pub const SHORT_FORM_SYSTEM_MESSAGE: &str =
    "You are an expert medical AI assistant. Provide concise and accurate answers.";

/// Smallest completion budget that fits "Maybe" and its neighbours.
const BOOLEAN_MIN_TOKENS: u32 = 3;

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("record `{record_id}` has mode {record_mode:?}, which the {profile_mode} profile cannot render")]
    ModeMismatch {
        record_id: String,
        record_mode: QaMode,
        profile_mode: ProfileMode,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileMode {
    Closed,
    LongForm,
    ShortForm,
}

impl ProfileMode {
    pub fn accepts(self, mode: QaMode) -> bool {
        match self {
            ProfileMode::Closed => mode.is_closed(),
            ProfileMode::LongForm => mode == QaMode::LongForm,
            ProfileMode::ShortForm => mode == QaMode::ShortForm,
        }
    }

    pub fn for_record(mode: QaMode) -> Self {
        match mode {
            QaMode::ClosedChoice | QaMode::ClosedBool => ProfileMode::Closed,
            QaMode::LongForm => ProfileMode::LongForm,
            QaMode::ShortForm => ProfileMode::ShortForm,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProfileMode::Closed => "closed",
            ProfileMode::LongForm => "long_form",
            ProfileMode::ShortForm => "short_form",
        }
    }
}

impl fmt::Display for ProfileMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProfileMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "closed" => Ok(ProfileMode::Closed),
            "long_form" | "long" => Ok(ProfileMode::LongForm),
            "short_form" | "short" => Ok(ProfileMode::ShortForm),
            other => Err(format!("unknown profile mode `{other}`")),
        }
    }
}

/// System message plus decoding parameters for one QA mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptProfile {
    pub mode: ProfileMode,
    pub system_message: String,
    pub params: DecodingParams,
}

pub fn profile_for(mode: ProfileMode) -> PromptProfile {
    let (system_message, params) = match mode {
        ProfileMode::Closed => (
            CLOSED_SYSTEM_MESSAGE,
            DecodingParams {
                max_tokens: 2,
                temperature: 0.1,
                top_p: 0.7,
                frequency_penalty: 0.5,
                presence_penalty: 0.1,
                stop: vec!["\n".to_string()],
                seed: None,
            },
        ),
        ProfileMode::LongForm => (
            LONG_FORM_SYSTEM_MESSAGE,
            DecodingParams {
                max_tokens: 300,
                temperature: 0.2,
                top_p: 0.8,
                frequency_penalty: 0.0,
                presence_penalty: 0.0,
                stop: vec![],
                seed: None,
            },
        ),
        ProfileMode::ShortForm => (
            SHORT_FORM_SYSTEM_MESSAGE,
            DecodingParams {
                max_tokens: 50,
                temperature: 0.2,
                top_p: 0.85,
                frequency_penalty: 0.2,
                presence_penalty: 0.0,
                stop: vec![],
                seed: None,
            },
        ),
    };
    PromptProfile {
        mode,
        system_message: system_message.to_string(),
        params,
    }
}

impl PromptProfile {
    /// The profile actually used for a record of `mode`. Boolean records
    /// under the stock closed profile get the yes/no/maybe system message and
    /// enough tokens for "Maybe"; everything else is returned unchanged.
    pub fn effective_for(&self, mode: QaMode) -> PromptProfile {
        let mut profile = self.clone();
        if mode == QaMode::ClosedBool && self.mode == ProfileMode::Closed && self.system_message == CLOSED_SYSTEM_MESSAGE {
            profile.system_message = BOOLEAN_SYSTEM_MESSAGE.to_string();
            profile.params.max_tokens = profile.params.max_tokens.max(BOOLEAN_MIN_TOKENS);
        }
        profile
    }
}

/// Partial profile from a config file. Every set field replaces the stock value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_message: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency_penalty: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub presence_penalty: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ProfileOverrides {
    pub fn is_empty(&self) -> bool {
        *self == ProfileOverrides::default()
    }

    /// Names of the overridden fields, for provenance logging.
    pub fn changed_fields(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        macro_rules! note {
            ($($f:ident),*) => { $( if self.$f.is_some() { out.push(stringify!($f)); } )* };
        }
        note!(system_message, max_tokens, temperature, top_p, frequency_penalty, presence_penalty, stop, seed);
        out
    }

    pub fn apply(&self, profile: &PromptProfile) -> PromptProfile {
        let mut p = profile.clone();
        if let Some(v) = &self.system_message {
            p.system_message = v.clone();
        }
        if let Some(v) = self.max_tokens {
            p.params.max_tokens = v;
        }
        if let Some(v) = self.temperature {
            p.params.temperature = v;
        }
        if let Some(v) = self.top_p {
            p.params.top_p = v;
        }
        if let Some(v) = self.frequency_penalty {
            p.params.frequency_penalty = v;
        }
        if let Some(v) = self.presence_penalty {
            p.params.presence_penalty = v;
        }
        if let Some(v) = &self.stop {
            p.params.stop = v.clone();
        }
        if self.seed.is_some() {
            p.params.seed = self.seed;
        }
        p
    }
}
