//! Typed async client for the bioqa service.

use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use bioqa_api::*;
use bioqa_core::corpus::{FinetunePlan, QaMode};
use bioqa_core::metrics::{CorpusMetric, RougeVariant};
use bioqa_core::pairwise::{NextTask, PairwiseSummary, Rating, RatingAck};
use bioqa_core::prompts::{ExtractedAnswer, ProfileMode, PromptProfile};
use bioqa_core::runner::MetricReport;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),
    /// The service answered with a non-2xx status and an error body.
    #[error("{status} {code}: {message}")]
    Api { status: StatusCode, code: String, message: String },
}

impl ClientError {
    /// Machine-readable error code, when the service sent one.
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { code, .. } => Some(code),
            ClientError::Http(_) => None,
        }
    }

    pub fn status(&self) -> Option<StatusCode> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            ClientError::Http(e) => e.status(),
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct BioqaClient {
    base: String,
    http: reqwest::Client,
}

impl BioqaClient {
    /// `base_url` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base_url: impl Into<String>) -> Self {
        Self::with_http(base_url, reqwest::Client::new())
    }

    pub fn with_http(base_url: impl Into<String>, http: reqwest::Client) -> Self {
        let base = base_url.into().trim_end_matches('/').to_string();
        Self { base, http }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn call<B: Serialize, T: DeserializeOwned>(
        &self,
        method: Method,
        path: &str,
        query: &[(&str, &str)],
        body: Option<&B>,
    ) -> Result<(StatusCode, T)> {
        let mut req = self.http.request(method, format!("{}{path}", self.base));
        if !query.is_empty() {
            req = req.query(query);
        }
        if let Some(body) = body {
            req = req.json(body);
        }
        let resp = req.send().await?;
        let status = resp.status();
        if status.is_success() {
            return Ok((status, resp.json().await?));
        }
        let text = resp.text().await?;
        Err(match serde_json::from_str::<ErrorBody>(&text) {
            Ok(e) => ClientError::Api { status, code: e.error, message: e.message },
            Err(_) => ClientError::Api { status, code: "http".into(), message: text },
        })
    }

    async fn get<T: DeserializeOwned>(&self, path: &str, query: &[(&str, &str)]) -> Result<T> {
        Ok(self.call::<(), T>(Method::GET, path, query, None).await?.1)
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        Ok(self.call(Method::POST, path, &[], Some(body)).await?.1)
    }

    pub async fn health(&self) -> Result<Health> {
        self.get("/health", &[]).await
    }

    pub async fn next_task(&self, rater: &str) -> Result<NextTask> {
        self.get("/tasks/next", &[("rater", rater)]).await
    }

    pub async fn submit_rating(&self, rating: &Rating) -> Result<RatingAck> {
        self.post("/ratings", rating).await
    }

    pub async fn summary(&self) -> Result<PairwiseSummary> {
        self.get("/summary", &[]).await
    }

    pub async fn export(&self) -> Result<Vec<Rating>> {
        Ok(self.get::<ExportResponse>("/export", &[]).await?.ratings)
    }

    pub async fn analyze(&self, text: &str) -> Result<Vec<String>> {
        let resp: AnalyzeResponse = self.post("/v1/analyze", &AnalyzeRequest { text: text.into() }).await?;
        Ok(resp.tokens)
    }

    pub async fn score(
        &self,
        metric: CorpusMetric,
        candidates: Vec<String>,
        references: Vec<String>,
        variant: RougeVariant,
    ) -> Result<ScoreResponse> {
        self.post("/v1/metrics/score", &ScoreRequest { metric, candidates, references, variant }).await
    }

    pub async fn extract(&self, mode: QaMode, raw: &str) -> Result<ExtractedAnswer> {
        let resp: ExtractResponse = self.post("/v1/extract", &ExtractRequest { mode, raw: raw.into() }).await?;
        Ok(resp.answer)
    }

    pub async fn profile(&self, mode: ProfileMode) -> Result<PromptProfile> {
        self.get(&format!("/v1/profiles/{}", mode.as_str()), &[]).await
    }

    pub async fn plan(&self, n_train: usize, seed: Option<u64>) -> Result<FinetunePlan> {
        self.post("/v1/plan", &PlanRequest { n_train, seed }).await
    }

    pub async fn search(&self, query: &str, k: usize) -> Result<Vec<SearchHit>> {
        let resp: SearchResponse = self.post("/v1/search", &SearchRequest { query: query.into(), k }).await?;
        Ok(resp.hits)
    }

    /// Runs a TOML config on the server. Relative paths in the config
    /// resolve against `base_dir` on the server's filesystem.
    pub async fn run(&self, config: &str, base_dir: &str) -> Result<MetricReport> {
        self.post("/v1/runs", &RunRequest { config: config.into(), base_dir: base_dir.into() }).await
    }

    pub async fn sweep(&self, config: &str, base_dir: &str, ks: &[usize]) -> Result<SweepResponse> {
        let req = SweepRequest { config: config.into(), base_dir: base_dir.into(), ks: ks.to_vec() };
        self.post("/v1/sweeps", &req).await
    }

    pub async fn render(&self, reports: Vec<MetricReport>, format: &str) -> Result<String> {
        let resp: RenderResponse = self.post("/v1/reports/render", &RenderRequest { reports, format: format.into() }).await?;
        Ok(resp.text)
    }
}
