use std::str::FromStr;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use sciqa_core::analytics::{
    accuracy_report, usage_report, AccuracyReport, Event, EventLog, FeedbackEvent, TimeRange,
    UsageEvent, UsageKind, UsageReport, Vote,
};
use sciqa_core::corpus::{ExamQuestion, Facets, Page, QuestionFilter, Section, MAX_PAGE_SIZE};
use sciqa_core::embedder::{EmbedderConfig, Provider};
use sciqa_core::qa::{
    AskRequest, AskResponse, HistoryEntry, QaEngine, ANSWER_COUNT, DEFAULT_HISTORY_PAGE_SIZE,
    MAX_QUESTION_CHARS, RELATED_COUNT,
};

use crate::error::ApiError;

/// Header carrying the client's opaque session token.
pub const SESSION_HEADER: &str = "x-session-id";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedderInfo {
    pub provider: Provider,
    pub dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
}

impl EmbedderInfo {
    pub fn from_config(config: &EmbedderConfig) -> Self {
        Self {
            provider: config.provider,
            dim: config.dim,
            endpoint: config.url.clone(),
        }
    }
}

struct Shared {
    qa: QaEngine,
    events: EventLog,
    embedder: EmbedderInfo,
}

/// Handler state: the QA engine (corpus, indexes, ask log) and the event log.
#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl AppState {
    pub fn new(qa: QaEngine, events: EventLog, embedder: EmbedderInfo) -> Self {
        Self(Arc::new(Shared {
            qa,
            events,
            embedder,
        }))
    }

    pub fn qa(&self) -> &QaEngine {
        &self.0.qa
    }

    pub fn events(&self) -> &EventLog {
        &self.0.events
    }

    pub fn embedder(&self) -> &EmbedderInfo {
        &self.0.embedder
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(health))
        .route("/api/config", get(client_config))
        .route("/api/ask", post(ask))
        .route("/api/questions", get(questions))
        .route("/api/history", get(history))
        .route("/api/feedback", post(feedback))
        .route("/api/events", post(usage_event))
        .route("/api/analytics/summary", get(summary))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .method_not_allowed_fallback(|| async {
            let mut e = ApiError::invalid_input("method not allowed").into_response();
            *e.status_mut() = StatusCode::METHOD_NOT_ALLOWED;
            e
        })
        .with_state(state)
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ApiError> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub passages: usize,
    pub questions: usize,
    pub embedder: EmbedderInfo,
    pub embedder_ok: bool,
}

async fn health(State(state): State<AppState>) -> Response {
    let probe = state.clone();
    let embedder_ok = blocking(move || Ok(probe.qa().embedder().embed("health check").is_ok()))
        .await
        .unwrap_or(false);
    let body = Health {
        status: if embedder_ok { "ok" } else { "degraded" }.into(),
        passages: state.qa().passage_index().current().len(),
        questions: state.qa().question_index().current().len(),
        embedder: state.embedder().clone(),
        embedder_ok,
    };
    let status = if embedder_ok {
        StatusCode::OK
    } else {
        StatusCode::SERVICE_UNAVAILABLE
    };
    (status, Json(body)).into_response()
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClientConfig {
    pub max_question_chars: usize,
    pub answer_count: usize,
    pub related_count: usize,
    pub max_page_size: usize,
    pub sections: Vec<Section>,
    pub usage_kinds: Vec<UsageKind>,
    pub facets: Facets,
}

async fn client_config(State(state): State<AppState>) -> Json<ClientConfig> {
    let facets = state
        .qa()
        .corpus()
        .read()
        .unwrap_or_else(|e| e.into_inner())
        .facets();
    Json(ClientConfig {
        max_question_chars: MAX_QUESTION_CHARS,
        answer_count: ANSWER_COUNT,
        related_count: RELATED_COUNT,
        max_page_size: MAX_PAGE_SIZE,
        sections: Section::ALL.to_vec(),
        usage_kinds: UsageKind::ALL.to_vec(),
        facets,
    })
}

async fn ask(
    State(state): State<AppState>,
    payload: Result<Json<AskRequest>, JsonRejection>,
) -> Result<Json<AskResponse>, ApiError> {
    let Json(request) = payload?;
    // Validate before handing off so bad input never occupies a worker.
    request.validate()?;
    let response = blocking(move || Ok(state.qa().ask(&request)?)).await?;
    Ok(Json(response))
}

/// Query string values arrive as text; empty values mean "not set".
fn parse_opt<T: FromStr>(name: &str, value: &Option<String>) -> Result<Option<T>, ApiError> {
    match value.as_deref().map(str::trim) {
        None | Some("") => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| ApiError::invalid_input(format!("invalid {name}: {v:?}"))),
    }
}

#[derive(Debug, Default, Deserialize)]
pub struct QuestionsQuery {
    year: Option<String>,
    exam: Option<String>,
    section: Option<String>,
    topic: Option<String>,
    page: Option<String>,
    page_size: Option<String>,
}

async fn questions(
    State(state): State<AppState>,
    query: Result<Query<QuestionsQuery>, QueryRejection>,
) -> Result<Json<Page<ExamQuestion>>, ApiError> {
    let Query(q) = query?;
    let defaults = QuestionFilter::default();
    let filter = QuestionFilter {
        year: parse_opt("year", &q.year)?,
        exam_label: parse_opt("exam", &q.exam)?,
        section: parse_opt("section", &q.section)?,
        topic: parse_opt("topic", &q.topic)?,
        page: parse_opt("page", &q.page)?.unwrap_or(defaults.page),
        page_size: parse_opt("page_size", &q.page_size)?.unwrap_or(defaults.page_size),
    };
    let corpus = state
        .qa()
        .corpus()
        .read()
        .unwrap_or_else(|e| e.into_inner());
    Ok(Json(corpus.filter_questions(&filter)?))
}

#[derive(Debug, Default, Deserialize)]
pub struct HistoryQuery {
    user_id: Option<String>,
    page: Option<String>,
    page_size: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HistoryPage {
    pub items: Vec<HistoryEntry>,
    pub page: usize,
}

async fn history(
    State(state): State<AppState>,
    query: Result<Query<HistoryQuery>, QueryRejection>,
) -> Result<Json<HistoryPage>, ApiError> {
    let Query(q) = query?;
    let user_id: String = parse_opt("user_id", &q.user_id)?
        .ok_or_else(|| ApiError::invalid_input("user_id is required"))?;
    let page: usize = parse_opt("page", &q.page)?.unwrap_or(1);
    let page_size: usize =
        parse_opt("page_size", &q.page_size)?.unwrap_or(DEFAULT_HISTORY_PAGE_SIZE);
    if page == 0 || page_size == 0 || page_size > MAX_PAGE_SIZE {
        return Err(ApiError::invalid_input(format!(
            "page must be ≥ 1 and page_size in 1..={MAX_PAGE_SIZE}"
        )));
    }
    Ok(Json(HistoryPage {
        items: state.qa().history(&user_id, page, page_size),
        page,
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeedbackRequest {
    pub question_id: String,
    pub position: u8,
    pub vote: Vote,
}

async fn feedback(
    State(state): State<AppState>,
    payload: Result<Json<FeedbackRequest>, JsonRejection>,
) -> Result<StatusCode, ApiError> {
    let Json(f) = payload?;
    let event = FeedbackEvent {
        question_id: f.question_id,
        position: f.position,
        vote: f.vote,
        ts: Utc::now(),
    };
    state
        .events()
        .record_feedback(event, state.qa().log().as_ref())?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UsageRequest {
    pub kind: String,
}

async fn usage_event(
    State(state): State<AppState>,
    headers: HeaderMap,
    payload: Result<Json<UsageRequest>, JsonRejection>,
) -> Result<StatusCode, ApiError> {
    let Json(body) = payload?;
    let session_id = headers
        .get(SESSION_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .ok_or_else(|| ApiError::invalid_input(format!("missing {SESSION_HEADER} header")))?;
    let kind: UsageKind = body.kind.parse()?;
    state.events().record_usage(UsageEvent {
        kind,
        session_id: session_id.to_string(),
        ts: Utc::now(),
    })?;
    Ok(StatusCode::NO_CONTENT)
}

#[derive(Debug, Default, Deserialize)]
pub struct SummaryQuery {
    from: Option<String>,
    to: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Summary {
    pub accuracy: AccuracyReport,
    pub usage: UsageReport,
}

async fn summary(
    State(state): State<AppState>,
    query: Result<Query<SummaryQuery>, QueryRejection>,
) -> Result<Json<Summary>, ApiError> {
    let Query(q) = query?;
    let range = TimeRange {
        from: parse_opt::<DateTime<Utc>>("from", &q.from)?,
        to: parse_opt::<DateTime<Utc>>("to", &q.to)?,
    };
    let events: Vec<Event> = state
        .events()
        .snapshot()
        .into_iter()
        .filter(|e| match e {
            Event::Feedback(f) => range.contains(f.ts),
            Event::Usage(_) => true,
        })
        .collect();
    let asked = state.qa().log().count_between(range.from, range.to);
    Ok(Json(Summary {
        accuracy: accuracy_report(&events),
        usage: usage_report(&events, range, asked),
    }))
}
