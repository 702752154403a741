use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::RunError;
use crate::corpus::{Dataset, QaMode};
use crate::llm::{HttpBackendConfig, MockKeying};
use crate::metrics::{RougeVariant, ScorerTransport};
use crate::prompts::ProfileOverrides;

/// One evaluation run, usually read from a TOML file:
///
/// ```toml
/// label = "baseline"
/// seed = 7
///
/// [dataset]
/// path = "medqa_test.jsonl"
/// format = "medqa"
///
/// [backend]
/// kind = "mock"
/// script = "responses.jsonl"
///
/// [rag]
/// index = "medqa_train.index"
/// k = 3
///
/// [profile]
/// temperature = 0.0
///
/// [output]
/// path = "reports/baseline.json"
/// ```
///
/// Relative paths resolve against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub label: Option<String>,
    /// Decoding seed used when the profile does not set one.
    #[serde(default)]
    pub seed: Option<u64>,
    pub dataset: DatasetSpec,
    pub backend: BackendSpec,
    #[serde(default)]
    pub rag: Option<RagSpec>,
    #[serde(default)]
    pub profile: ProfileOverrides,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub metrics: MetricsSpec,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub path: PathBuf,
    pub format: Dataset,
    /// Expected mode of every record. Inferred when absent.
    #[serde(default)]
    pub mode: Option<QaMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    Mock {
        script: PathBuf,
        #[serde(default = "default_keying")]
        keying: MockKeying,
        #[serde(default = "default_mock_model")]
        model: String,
    },
    Http(HttpBackendConfig),
}

fn default_keying() -> MockKeying {
    MockKeying::RecordId
}

fn default_mock_model() -> String {
    "mock".into()
}

impl BackendSpec {
    pub fn model(&self) -> &str {
        match self {
            BackendSpec::Mock { model, .. } => model,
            BackendSpec::Http(c) => &c.model,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RagSpec {
    pub index: PathBuf,
    pub k: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub path: Option<PathBuf>,
    /// Abort on the first failed record instead of scoring it as wrong.
    #[serde(default)]
    pub strict: bool,
    /// In-flight request cap; the backend's own limit when absent.
    #[serde(default)]
    pub max_parallel: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSpec {
    #[serde(default)]
    pub rouge: RougeVariant,
    #[serde(default)]
    pub scorers: Vec<ScorerSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerSpec {
    pub name: String,
    #[serde(flatten)]
    pub transport: ScorerTransport,
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, RunError> {
        let mut config: RunConfig = toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        config.base_dir = base_dir.into();
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, base)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if let Some(rag) = &self.rag {
            if rag.k < 1 {
                return Err(RunError::Config("rag.k must be at least 1".into()));
            }
        }
        if self.output.max_parallel == Some(0) {
            return Err(RunError::Config("output.max_parallel must be at least 1".into()));
        }
        let mut names: Vec<&str> = self.metrics.scorers.iter().map(|s| s.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(RunError::Config("scorer names must be unique".into()));
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// Same config with a different retrieval depth.
    pub fn with_k(&self, k: usize) -> Result<Self, RunError> {
        let mut c = self.clone();
        match &mut c.rag {
            Some(rag) => rag.k = k,
            None => return Err(RunError::Config("top-k sweeps need a [rag] section".into())),
        }
        c.validate()?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
label = "demo"
seed = 7

[dataset]
path = "data.jsonl"
format = "medqa"
mode = "closed_choice"

[backend]
kind = "mock"
script = "script.jsonl"
keying = "message_hash"

[rag]
index = "train.index"
k = 3

[profile]
temperature = 0.0

[output]
path = "out/report.json"
strict = true

[metrics]
rouge = "f1"

[[metrics.scorers]]
name = "bertscore"
kind = "process"
command = "score.sh"
"#;

    #[test]
    fn parses_every_section() {
        let c = RunConfig::from_toml(FULL, "/cfg").unwrap();
        assert_eq!(c.label.as_deref(), Some("demo"));
        assert_eq!(c.dataset.format, Dataset::Medqa);
        assert!(matches!(c.backend, BackendSpec::Mock { keying: MockKeying::MessageHash, .. }));
        assert_eq!(c.rag.as_ref().unwrap().k, 3);
        assert_eq!(c.profile.temperature, Some(0.0));
        assert!(c.output.strict);
        assert_eq!(c.metrics.rouge, RougeVariant::F1);
        assert_eq!(c.metrics.scorers[0].name, "bertscore");
        assert_eq!(c.resolve(&c.dataset.path), PathBuf::from("/cfg/data.jsonl"));
        assert_eq!(c.resolve(Path::new("/abs")), PathBuf::from("/abs"));
    }

    #[test]
    fn http_backend_section() {
        let text = r#"
[dataset]
path = "d.jsonl"
format = "liveqa"
[backend]
kind = "http"
endpoint = "http://localhost:8000/v1/chat/completions"
model = "gpt-4o"
api_key_env = "OPENAI_API_KEY"
"#;
        let c = RunConfig::from_toml(text, ".").unwrap();
        assert_eq!(c.backend.model(), "gpt-4o");
        assert!(c.rag.is_none());
    }

    #[test]
    fn rejects_bad_values() {
        let zero_k = FULL.replace("k = 3", "k = 0");
        assert!(matches!(RunConfig::from_toml(&zero_k, "."), Err(RunError::Config(_))));
        let unknown = FULL.replace("strict = true", "strict = true\ncolour = 1");
        assert!(matches!(RunConfig::from_toml(&unknown, "."), Err(RunError::Config(_))));
    }

    #[test]
    fn with_k_changes_only_k() {
        let c = RunConfig::from_toml(FULL, ".").unwrap();
        let d = c.with_k(5).unwrap();
        assert_eq!(d.rag.as_ref().unwrap().k, 5);
        let mut e = d.clone();
        e.rag.as_mut().unwrap().k = 3;
        assert_eq!(e, c);
        assert!(c.with_k(0).is_err());
    }
}
