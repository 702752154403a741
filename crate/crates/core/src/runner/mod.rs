//! Evaluation runs, top-k sweeps and report rendering.

mod config;
mod emit;
mod report;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use futures::stream::{self, StreamExt};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::{info, warn};

use crate::corpus::{parse_dataset, CorpusError, QARecord, QaMode};
use crate::index::{load_index, Index, IndexError};
use crate::llm::{
    complete, load_script, make_mock, message_hash, Backend, FinishReason, HttpBackend, LlmError, ModelResponse,
};
use crate::metrics::{ExternalScorer, MetricsError};
use crate::prompts::{assemble, extract_answer, profile_for, ExtractedAnswer, ProfileMode, PromptError, PromptProfile, RetrievedChunk};

pub use config::{BackendSpec, DatasetSpec, MetricsSpec, OutputSpec, RagSpec, RunConfig, ScorerSpec};
pub use emit::{emit_report, metric_columns, ReportFormat};
pub use report::{
    compute_aggregates, MetricReport, RecordLog, ACCURACY, BLEU, BUILTIN_METRICS, CORRECT, REPORT_FORMAT,
    REPORT_VERSION, ROUGE1, ROUGE2, ROUGEL,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("retrieval index `{0}` not found")]
    IndexMissing(PathBuf),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("record `{record_id}` has mode {found}, expected {expected}")]
    ModeMismatch { record_id: String, expected: String, found: String },
    #[error("reports or records mix modes: {0}")]
    MixedModes(String),
    #[error("record `{record_id}` failed: {reason}")]
    RecordFailed { record_id: String, reason: String },
    #[error("sweep needs at least one k")]
    EmptySweep,
    #[error("report: {0}")]
    Report(String),
}

impl RunError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        RunError::Io { path: path.to_path_buf(), source }
    }
}

/// The backend a config describes.
pub fn build_backend(config: &RunConfig) -> Result<Arc<dyn Backend>, RunError> {
    Ok(match &config.backend {
        BackendSpec::Mock { script, keying, .. } => {
            Arc::new(make_mock(load_script(&config.resolve(script))?, *keying)?)
        }
        BackendSpec::Http(http) => Arc::new(HttpBackend::new(http.clone())?),
    })
}

/// Inputs checked and loaded before any backend call.
struct Prepared {
    records: Vec<QARecord>,
    mode: QaMode,
    index: Option<Arc<Index>>,
}

fn prepare(config: &RunConfig) -> Result<Prepared, RunError> {
    config.validate()?;
    let index = match &config.rag {
        Some(rag) => {
            let path = config.resolve(&rag.index);
            if !path.is_file() {
                return Err(RunError::IndexMissing(path));
            }
            let file = File::open(&path).map_err(|e| RunError::io(&path, e))?;
            Some(Arc::new(load_index(BufReader::new(file))?))
        }
        None => None,
    };

    let path = config.resolve(&config.dataset.path);
    let file = File::open(&path).map_err(|e| RunError::io(&path, e))?;
    let records = parse_dataset(config.dataset.format, BufReader::new(file))?;
    let first = records.first().ok_or(CorpusError::EmptyInput)?;
    let mode = config.dataset.mode.unwrap_or(first.mode);
    if let Some(odd) = records.iter().find(|r| r.mode != mode) {
        let err = RunError::ModeMismatch {
            record_id: odd.id.clone(),
            expected: mode.as_str().into(),
            found: odd.mode.as_str().into(),
        };
        return Err(match config.dataset.mode {
            Some(_) => err,
            None => RunError::MixedModes(err.to_string()),
        });
    }
    Ok(Prepared { records, mode, index })
}

/// Stock profile for the run's mode with config overrides and seed applied.
pub fn effective_profile(config: &RunConfig, mode: QaMode) -> PromptProfile {
    let mut profile = config.profile.apply(&profile_for(ProfileMode::for_record(mode)));
    if profile.params.seed.is_none() {
        profile.params.seed = config.seed;
    }
    profile
}

/// Hex SHA-256 over the config and profile.
pub fn fingerprint(config: &RunConfig, profile: &PromptProfile) -> String {
    let bytes = serde_json::to_vec(&(config, profile)).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

fn default_label(config: &RunConfig) -> String {
    match (&config.label, &config.rag) {
        (Some(label), _) => label.clone(),
        (None, Some(rag)) => format!("{}+rag@{}", config.backend.model(), rag.k),
        (None, None) => config.backend.model().to_string(),
    }
}

/// Runs a config end to end with the backend it describes, persisting the
/// report when an output path is set.
pub async fn run_eval(config: &RunConfig) -> Result<MetricReport, RunError> {
    let prepared = prepare(config)?;
    let backend = build_backend(config)?;
    let report = execute(config, &prepared, backend).await?;
    persist(config, &report, None)?;
    Ok(report)
}

/// [`run_eval`] against a caller-supplied backend. Nothing is persisted.
pub async fn run_eval_with(config: &RunConfig, backend: Arc<dyn Backend>) -> Result<MetricReport, RunError> {
    let prepared = prepare(config)?;
    execute(config, &prepared, backend).await
}

fn persist(config: &RunConfig, report: &MetricReport, suffix: Option<&str>) -> Result<Option<PathBuf>, RunError> {
    let Some(out) = &config.output.path else { return Ok(None) };
    let mut path = config.resolve(out);
    if let Some(suffix) = suffix {
        path = with_stem_suffix(&path, suffix, None);
    }
    report.save(&path)?;
    info!(path = %path.display(), "report written");
    Ok(Some(path))
}

fn with_stem_suffix(path: &Path, suffix: &str, extension: Option<&str>) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    let ext = extension
        .map(str::to_string)
        .or_else(|| path.extension().map(|e| e.to_string_lossy().into_owned()));
    let name = match ext {
        Some(ext) => format!("{stem}{suffix}.{ext}"),
        None => format!("{stem}{suffix}"),
    };
    path.with_file_name(name)
}

struct Outcome {
    prompt_hash: String,
    retrieved: Vec<String>,
    response: Result<ModelResponse, LlmError>,
}

async fn execute(config: &RunConfig, prepared: &Prepared, backend: Arc<dyn Backend>) -> Result<MetricReport, RunError> {
    let started = Instant::now();
    let mode = prepared.mode;
    let profile = effective_profile(config, mode);
    let model = config.backend.model().to_string();
    let k = config.rag.as_ref().map(|r| r.k);
    let parallel = config.output.max_parallel.unwrap_or_else(|| backend.max_parallel()).max(1);

    // Prompts are assembled up front so a mode mismatch fails before any call.
    let mut requests = Vec::with_capacity(prepared.records.len());
    for record in &prepared.records {
        let hits: Option<Vec<RetrievedChunk>> = match (&prepared.index, k) {
            (Some(index), Some(k)) => Some(retrieve(index, &record.question, k)?),
            _ => None,
        };
        let prompt = assemble(&profile, record, hits.as_deref())?;
        let request = prompt.to_request(&model);
        let retrieved = hits.unwrap_or_default().into_iter().map(|(c, _)| c.chunk_id).collect();
        requests.push((request, retrieved));
    }

    let outcomes: Vec<Outcome> = stream::iter(requests)
        .map(|(request, retrieved)| {
            let backend = Arc::clone(&backend);
            async move {
                let response = complete(backend.as_ref(), &request).await;
                Outcome { prompt_hash: message_hash(&request.messages), retrieved, response }
            }
        })
        .buffered(parallel)
        .collect()
        .await;

    let mut records = Vec::with_capacity(outcomes.len());
    for (record, outcome) in prepared.records.iter().zip(outcomes) {
        let log = record_log(record, mode, outcome);
        if let Some(reason) = &log.error {
            if config.output.strict {
                return Err(RunError::RecordFailed { record_id: record.id.clone(), reason: reason.clone() });
            }
            warn!(record = %record.id, %reason, "record failed");
        }
        records.push(log);
    }

    if !mode.is_closed() {
        score_text(config, &mut records).await?;
    }
    let scorer_names: Vec<String> = config.metrics.scorers.iter().map(|s| s.name.clone()).collect();
    let dataset = config.dataset.format;
    let (aggregates, distribution) = if mode.is_closed() {
        compute_aggregates(&records, dataset, mode, config.metrics.rouge, &[])?
    } else {
        compute_aggregates(&records, dataset, mode, config.metrics.rouge, &scorer_names)?
    };

    let failures = records.iter().filter(|r| r.error.is_some()).count();
    info!(
        n = records.len(),
        failures,
        elapsed_ms = started.elapsed().as_millis() as u64,
        "run finished"
    );
    Ok(MetricReport {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        label: default_label(config),
        fingerprint: fingerprint(config, &profile),
        config: config.clone(),
        profile,
        dataset,
        mode,
        n: records.len(),
        failures,
        aggregates,
        distribution,
        records,
    })
}

fn retrieve(index: &Index, query: &str, k: usize) -> Result<Vec<RetrievedChunk>, RunError> {
    match index.search(query, k) {
        Ok(hits) => Ok(hits
            .into_iter()
            .filter_map(|h| index.chunk(&h.chunk_id).map(|c| (c.clone(), h.score)))
            .collect()),
        // a question made only of stopwords retrieves nothing
        Err(IndexError::EmptyQuery) => Ok(Vec::new()),
        Err(e) => Err(e.into()),
    }
}

fn record_log(record: &QARecord, mode: QaMode, outcome: Outcome) -> RecordLog {
    let (raw_response, finish_reason, error) = match outcome.response {
        Ok(resp) => {
            let error = (resp.finish_reason == FinishReason::Error || resp.raw_text.is_none())
                .then(|| "backend returned no completion".to_string());
            (resp.raw_text, Some(resp.finish_reason), error)
        }
        Err(e) => (None, None, Some(e.to_string())),
    };
    let extracted = raw_response.as_deref().and_then(|raw| match extract_answer(mode, raw) {
        ExtractedAnswer::Label(l) => Some(l.to_string()),
        ExtractedAnswer::Text(t) => Some(t),
        ExtractedAnswer::Unparseable => None,
    });
    let mut scores = BTreeMap::new();
    if mode.is_closed() {
        let predicted = extracted.as_deref().and_then(|e| e.parse().ok());
        let hit = predicted.is_some() && predicted == record.gold.label;
        scores.insert(CORRECT.to_string(), if hit { 1.0 } else { 0.0 });
    }
    RecordLog {
        id: record.id.clone(),
        question: record.question.clone(),
        prompt_hash: outcome.prompt_hash,
        retrieved: outcome.retrieved,
        raw_response,
        finish_reason,
        extracted,
        gold: record.gold.clone(),
        scores,
        error,
    }
}

async fn score_text(config: &RunConfig, records: &mut [RecordLog]) -> Result<(), RunError> {
    for r in records.iter_mut() {
        for (name, value) in report::text_scores(r.candidate_text(), r.reference_text(), config.metrics.rouge) {
            r.scores.insert(name.to_string(), value);
        }
    }
    for spec in &config.metrics.scorers {
        let scorer = ExternalScorer::new(spec.name.clone(), spec.transport.clone());
        let cands: Vec<String> = records.iter().map(|r| r.candidate_text().to_string()).collect();
        let refs: Vec<String> = records.iter().map(|r| r.reference_text().to_string()).collect();
        let values = tokio::task::spawn_blocking(move || scorer.score_segments(&cands, &refs))
            .await
            .map_err(|e| RunError::Config(format!("scorer task failed: {e}")))??;
        for (r, v) in records.iter_mut().zip(values) {
            r.scores.insert(spec.name.clone(), 100.0 * v);
        }
    }
    Ok(())
}

/// One row per k of a sweep.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SweepSummary {
    pub columns: Vec<String>,
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub values: BTreeMap<String, f64>,
}

impl SweepSummary {
    pub fn from_reports(reports: &[MetricReport]) -> Self {
        let columns = metric_columns(reports);
        let rows = reports
            .iter()
            .map(|r| SweepRow {
                k: r.config.rag.as_ref().map_or(0, |rag| rag.k),
                values: r.aggregates.clone(),
            })
            .collect();
        Self { columns, rows }
    }

    /// `k,<metric>,...` with two-decimal values.
    pub fn to_delimited(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["k".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for row in &self.rows {
            let mut line = vec![row.k.to_string()];
            line.extend(
                self.columns
                    .iter()
                    .map(|c| row.values.get(c).map(|v| format!("{v:.2}")).unwrap_or_default()),
            );
            w.write_record(&line).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub reports: Vec<MetricReport>,
    pub summary: SweepSummary,
}

/// One run per k with everything else fixed. With an output path, each
/// report goes to `<stem>-k<k>.<ext>` and the summary to `<stem>-sweep.csv`.
pub async fn sweep_topk(config: &RunConfig, ks: &[usize]) -> Result<SweepOutcome, RunError> {
    let backend = build_backend(config)?;
    sweep_topk_with(config, ks, backend).await
}

pub async fn sweep_topk_with(
    config: &RunConfig,
    ks: &[usize],
    backend: Arc<dyn Backend>,
) -> Result<SweepOutcome, RunError> {
    if ks.is_empty() {
        return Err(RunError::EmptySweep);
    }
    let configs: Vec<RunConfig> = ks.iter().map(|&k| config.with_k(k)).collect::<Result<_, _>>()?;
    let prepared = prepare(&configs[0])?;
    let mut reports = Vec::with_capacity(ks.len());
    for (k, cfg) in ks.iter().zip(&configs) {
        let report = execute(cfg, &prepared, Arc::clone(&backend)).await?;
        persist(cfg, &report, Some(&format!("-k{k}")))?;
        reports.push(report);
    }
    let summary = SweepSummary::from_reports(&reports);
    if let Some(out) = &config.output.path {
        let path = with_stem_suffix(&config.resolve(out), "-sweep", Some("csv"));
        std::fs::write(&path, summary.to_delimited()).map_err(|e| RunError::io(&path, e))?;
    }
    Ok(SweepOutcome { reports, summary })
}
