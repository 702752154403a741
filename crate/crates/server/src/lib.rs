//! HTTP/JSON service over the harness.
//!
//! Pairwise review (attached when a review session is loaded):
//!
//! | method | path | body / result |
//! |---|---|---|
//! | GET | `/health` | [`Health`] |
//! | GET | `/tasks/next?rater=<id>` | next blinded task for the rater |
//! | POST | `/ratings` | `Rating` → acknowledgment |
//! | GET | `/summary` | preference tally |
//! | GET | `/export` | full rating log |
//!
//! Harness operations live under `/v1`: `analyze`, `metrics/score`,
//! `extract`, `profiles/{mode}`, `plan`, `search`, `runs`, `sweeps` and
//! `reports/render`.

use std::future::Future;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use tracing::{info, warn};

use bioqa_api::*;
use bioqa_core::corpus::{plan_hyperparameters, CorpusError};
use bioqa_core::index::{analyze, Index, IndexError};
use bioqa_core::llm::LlmError;
use bioqa_core::metrics::{score_corpus, MetricsError};
use bioqa_core::pairwise::{PairwiseError, PairwiseStore, Rating};
use bioqa_core::prompts::{extract_answer, profile_for, ProfileMode};
use bioqa_core::runner::{emit_report, run_eval, sweep_topk, ReportFormat, RunConfig, RunError};

#[derive(Clone, Default)]
pub struct AppState {
    pub pairwise: Option<Arc<PairwiseStore>>,
    pub index: Option<Arc<Index>>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into() }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn unprocessable(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = ErrorBody { error: self.code.to_string(), message: self.message };
        (self.status, Json(body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::new(r.status(), "invalid_body", r.body_text())
    }
}

impl From<QueryRejection> for ApiError {
    fn from(r: QueryRejection) -> Self {
        ApiError::bad_request(r.body_text())
    }
}

impl From<PairwiseError> for ApiError {
    fn from(e: PairwiseError) -> Self {
        let msg = e.to_string();
        match e {
            PairwiseError::UnknownTask(_) => ApiError::new(StatusCode::NOT_FOUND, "unknown_task", msg),
            PairwiseError::AlreadyRated { .. } => ApiError::new(StatusCode::CONFLICT, "already_rated", msg),
            PairwiseError::MissingCriterion(_) => ApiError::unprocessable("missing_criterion", msg),
            PairwiseError::EmptyRater => ApiError::unprocessable("empty_rater", msg),
            PairwiseError::NoRatings => ApiError::new(StatusCode::CONFLICT, "no_ratings", msg),
            PairwiseError::DatasetMismatch(_) | PairwiseError::InsufficientRecords { .. } => {
                ApiError::unprocessable("invalid_pairing", msg)
            }
            PairwiseError::Corrupt(_) | PairwiseError::Io(_) => {
                ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", msg)
            }
        }
    }
}

impl From<MetricsError> for ApiError {
    fn from(e: MetricsError) -> Self {
        let msg = e.to_string();
        match e {
            MetricsError::ScorerUnavailable { .. } | MetricsError::ProtocolViolation { .. } => {
                ApiError::new(StatusCode::BAD_GATEWAY, "scorer", msg)
            }
            _ => ApiError::unprocessable("invalid_metric_input", msg),
        }
    }
}

impl From<IndexError> for ApiError {
    fn from(e: IndexError) -> Self {
        ApiError::unprocessable("invalid_query", e.to_string())
    }
}

impl From<RunError> for ApiError {
    fn from(e: RunError) -> Self {
        let msg = e.to_string();
        match e {
            RunError::Llm(LlmError::Config(_)) => ApiError::unprocessable("invalid_run", msg),
            RunError::Llm(_) | RunError::RecordFailed { .. } => ApiError::new(StatusCode::BAD_GATEWAY, "backend", msg),
            RunError::Metrics(m) => m.into(),
            RunError::Io { .. } | RunError::IndexMissing(_) | RunError::Corpus(CorpusError::Io(_)) => {
                ApiError::new(StatusCode::NOT_FOUND, "missing_input", msg)
            }
            _ => ApiError::unprocessable("invalid_run", msg),
        }
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn store(state: &AppState) -> Result<Arc<PairwiseStore>, ApiError> {
    state
        .pairwise
        .clone()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no_session", "no review session is loaded"))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/tasks/next", get(next_task))
        .route("/ratings", post(post_rating))
        .route("/summary", get(summary))
        .route("/export", get(export))
        .route("/v1/analyze", post(analyze_text))
        .route("/v1/metrics/score", post(score))
        .route("/v1/extract", post(extract))
        .route("/v1/profiles/{mode}", get(profile))
        .route("/v1/plan", post(plan))
        .route("/v1/search", post(search))
        .route("/v1/runs", post(run))
        .route("/v1/sweeps", post(sweep))
        .route("/v1/reports/render", post(render))
        .with_state(state)
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

async fn health(State(state): State<AppState>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        tasks: state.pairwise.as_ref().map(|s| s.tasks().len()),
        index_chunks: state.index.as_ref().map(|i| i.doc_count()),
    })
}

#[derive(Deserialize)]
struct RaterQuery {
    rater: Option<String>,
}

async fn next_task(
    State(state): State<AppState>,
    query: Result<Query<RaterQuery>, QueryRejection>,
) -> ApiResult<bioqa_core::pairwise::NextTask> {
    let Query(q) = query?;
    let rater = q.rater.filter(|r| !r.trim().is_empty()).ok_or_else(|| ApiError::bad_request("`rater` is required"))?;
    Ok(Json(store(&state)?.next_task(&rater)))
}

async fn post_rating(
    State(state): State<AppState>,
    body: Result<Json<Rating>, JsonRejection>,
) -> Result<(StatusCode, Json<bioqa_core::pairwise::RatingAck>), ApiError> {
    let Json(rating) = body?;
    let store = store(&state)?;
    let ack = tokio::task::spawn_blocking(move || store.record_rating(rating))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    let status = if ack.duplicate { StatusCode::OK } else { StatusCode::CREATED };
    Ok((status, Json(ack)))
}

async fn summary(State(state): State<AppState>) -> ApiResult<bioqa_core::pairwise::PairwiseSummary> {
    Ok(Json(store(&state)?.tally()?))
}

async fn export(State(state): State<AppState>) -> ApiResult<ExportResponse> {
    Ok(Json(ExportResponse { ratings: store(&state)?.export() }))
}

async fn analyze_text(body: Result<Json<AnalyzeRequest>, JsonRejection>) -> ApiResult<AnalyzeResponse> {
    let Json(req) = body?;
    Ok(Json(AnalyzeResponse { tokens: analyze(&req.text).0 }))
}

async fn score(body: Result<Json<ScoreRequest>, JsonRejection>) -> ApiResult<ScoreResponse> {
    let Json(req) = body?;
    let (score, bleu) = score_corpus(req.metric, &req.candidates, &req.references, req.variant)?;
    Ok(Json(ScoreResponse { metric: req.metric, score: score.0, bleu }))
}

async fn extract(body: Result<Json<ExtractRequest>, JsonRejection>) -> ApiResult<ExtractResponse> {
    let Json(req) = body?;
    Ok(Json(ExtractResponse { answer: extract_answer(req.mode, &req.raw) }))
}

async fn profile(Path(mode): Path<String>) -> ApiResult<bioqa_core::prompts::PromptProfile> {
    let mode: ProfileMode = mode.parse().map_err(|e: String| ApiError::new(StatusCode::NOT_FOUND, "unknown_mode", e))?;
    Ok(Json(profile_for(mode)))
}

async fn plan(body: Result<Json<PlanRequest>, JsonRejection>) -> ApiResult<bioqa_core::corpus::FinetunePlan> {
    let Json(req) = body?;
    plan_hyperparameters(req.n_train, req.seed)
        .map(Json)
        .map_err(|e| ApiError::unprocessable("invalid_count", e.to_string()))
}

async fn search(State(state): State<AppState>, body: Result<Json<SearchRequest>, JsonRejection>) -> ApiResult<SearchResponse> {
    let Json(req) = body?;
    let index = state
        .index
        .clone()
        .ok_or_else(|| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "no_index", "no retrieval index is loaded"))?;
    let hits = index
        .search(&req.query, req.k)?
        .into_iter()
        .map(|h| SearchHit {
            rank: h.rank,
            text: index.chunk(&h.chunk_id).map(|c| c.text.clone()).unwrap_or_default(),
            chunk_id: h.chunk_id,
            score: h.score,
        })
        .collect();
    Ok(Json(SearchResponse { hits }))
}

fn parse_config(text: &str, base_dir: &str) -> Result<RunConfig, ApiError> {
    Ok(RunConfig::from_toml(text, base_dir)?)
}

async fn run(body: Result<Json<RunRequest>, JsonRejection>) -> ApiResult<bioqa_core::runner::MetricReport> {
    let Json(req) = body?;
    let config = parse_config(&req.config, &req.base_dir)?;
    let report = run_eval(&config).await.inspect_err(|e| warn!(error = %e, "run failed"))?;
    Ok(Json(report))
}

async fn sweep(body: Result<Json<SweepRequest>, JsonRejection>) -> ApiResult<SweepResponse> {
    let Json(req) = body?;
    let config = parse_config(&req.config, &req.base_dir)?;
    let outcome = sweep_topk(&config, &req.ks).await?;
    Ok(Json(SweepResponse { summary: outcome.summary, reports: outcome.reports }))
}

async fn render(body: Result<Json<RenderRequest>, JsonRejection>) -> ApiResult<RenderResponse> {
    let Json(req) = body?;
    let format: ReportFormat = req.format.parse().map_err(|e: String| ApiError::unprocessable("unknown_format", e))?;
    Ok(Json(RenderResponse { text: emit_report(&req.reports, format)? }))
}
