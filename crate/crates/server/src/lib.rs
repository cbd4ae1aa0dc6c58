//! HTTP facade over the core platform. Handlers hold no state of their own;
//! every request goes to the shared store, so any number of instances can
//! serve the same deployment.

use std::collections::HashMap;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{FromRequestParts, Path, Query, State};
use axum::http::header::{AUTHORIZATION, CONTENT_TYPE};
use axum::http::request::Parts;
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::de::DeserializeOwned;
use serde_json::json;
use tower_http::cors::CorsLayer;

use examlab_core::dataset::ExportFilter;
use examlab_core::harness::{ConsensusPolicy, EvalRequest, ReportFormat};
use examlab_core::session::StudentKey;
use examlab_core::{Platform, Principal};

pub mod config;
pub mod error;
pub mod views;

pub use config::ServerConfig;

/// Bumped on any incompatible change to request or response shapes.
pub const API_VERSION: u32 = 1;
pub use error::{status_for, ApiError};
use views::*;

#[derive(Clone)]
pub struct AppState {
    pub platform: Platform,
    admin_token: Option<Arc<str>>,
}

impl AppState {
    /// `admin_token` of `None` locks every admin route.
    pub fn new(platform: Platform, admin_token: Option<String>) -> Self {
        Self {
            platform,
            admin_token: admin_token.map(Arc::from),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

trait CoreResult<T> {
    fn api(self) -> ApiResult<T>;
}

impl<T, E: Into<examlab_core::Error>> CoreResult<T> for Result<T, E> {
    fn api(self) -> ApiResult<T> {
        self.map_err(|e| ApiError::from(e.into()))
    }
}

/// Run blocking core work off the async executor.
async fn blocking<T, F>(f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce() -> ApiResult<T> + Send + 'static,
{
    tokio::task::spawn_blocking(f).await.map_err(|e| {
        log::error!("handler task failed: {e}");
        ApiError::internal()
    })?
}

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::bad_request(format!("malformed request body: {e}")))
}

fn parse_key(raw: &str) -> ApiResult<StudentKey> {
    StudentKey::parse(raw)
        .ok_or_else(|| ApiError::bad_request("student_key must be 64 lowercase hex digits"))
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

/// Extractor guarding admin routes with the bearer token.
pub struct Admin;

impl FromRequestParts<AppState> for Admin {
    type Rejection = ApiError;

    async fn from_request_parts(
        parts: &mut Parts,
        state: &AppState,
    ) -> Result<Self, Self::Rejection> {
        let expected = state
            .admin_token
            .as_deref()
            .ok_or_else(ApiError::unauthorized)?;
        let given = parts
            .headers
            .get(AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .ok_or_else(ApiError::unauthorized)?;
        if constant_time_eq(given.trim().as_bytes(), expected.as_bytes()) {
            Ok(Admin)
        } else {
            Err(ApiError::unauthorized())
        }
    }
}

pub fn router(state: AppState, ui_origin: Option<&str>) -> Router {
    let student = Router::new()
        .route(
            "/api/health",
            get(|| async { Json(json!({"status": "ok", "api_version": API_VERSION})) }),
        )
        .route("/api/identify", post(identify))
        .route("/api/exams", get(list_exams))
        .route("/api/exams/{exam_id}", get(get_exam))
        .route("/api/sessions", post(start_session))
        .route("/api/sessions/{session_id}", get(get_session))
        .route(
            "/api/sessions/{session_id}/answers/{question_id}",
            put(record_answer),
        )
        .route("/api/sessions/{session_id}/submit", post(submit))
        .route("/api/sessions/{session_id}/assess", post(reassess))
        .route("/api/sessions/{session_id}/results", get(results));
    let admin = Router::new()
        .route("/api/admin/exams", post(ingest_exam))
        .route("/api/admin/exams/{exam_id}/scheme", get(get_scheme))
        .route("/api/admin/validate", get(validate))
        .route("/api/admin/export", get(export))
        .route("/api/admin/grades", post(ingest_grades))
        .route("/api/admin/eval/runs", post(start_run).get(list_runs))
        .route("/api/admin/eval/runs/{run_id}/report", get(run_report));
    let mut app = student.merge(admin).with_state(state);
    if let Some(origin) = ui_origin.and_then(|o| HeaderValue::from_str(o).ok()) {
        app = app.layer(
            CorsLayer::new()
                .allow_origin(origin)
                .allow_methods([Method::GET, Method::POST, Method::PUT])
                .allow_headers([CONTENT_TYPE, AUTHORIZATION]),
        );
    }
    app
}

// Student routes.

async fn identify(State(s): State<AppState>, body: Bytes) -> ApiResult<Json<serde_json::Value>> {
    let body: IdentifyBody = parse_body(&body)?;
    let key = s.platform.identify(&body.email)?;
    Ok(Json(json!({ "student_key": key })))
}

async fn list_exams(
    State(s): State<AppState>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    blocking(move || {
        let exams = s
            .platform
            .corpus
            .list_exams(q.get("subject").map(String::as_str))
            .api()?;
        Ok(Json(exams).into_response())
    })
    .await
}

async fn get_exam(State(s): State<AppState>, Path(exam_id): Path<String>) -> ApiResult<Response> {
    blocking(move || {
        let exam = s.platform.corpus.get_exam(&exam_id).api()?;
        Ok(Json(exam).into_response())
    })
    .await
}

fn session_view(p: &Platform, session_id: &str) -> ApiResult<SessionView> {
    let session = p.sessions.get(session_id).api()?;
    let exam = p.corpus.get_exam(&session.exam_id).api()?;
    Ok(SessionView::new(session, exam, p.clock.now()))
}

async fn start_session(State(s): State<AppState>, body: Bytes) -> ApiResult<Json<SessionView>> {
    let body: StartBody = parse_body(&body)?;
    let key = parse_key(&body.student_key)?;
    blocking(move || {
        let session = s
            .platform
            .sessions
            .start_or_resume(&key, &body.exam_id)
            .api()?;
        Ok(Json(session_view(&s.platform, &session.session_id)?))
    })
    .await
}

async fn get_session(
    State(s): State<AppState>,
    Path(session_id): Path<String>,
) -> ApiResult<Json<SessionView>> {
    blocking(move || Ok(Json(session_view(&s.platform, &session_id)?))).await
}

async fn record_answer(
    State(s): State<AppState>,
    Path((session_id, question_id)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<Response> {
    let body: AnswerBody = parse_body(&body)?;
    blocking(move || {
        let state = s
            .platform
            .sessions
            .record_answer(
                &session_id,
                &question_id,
                body.payload,
                body.expected_version,
            )
            .api()?;
        Ok(Json(state).into_response())
    })
    .await
}

fn queue_assessment(p: &Platform, session_id: String) {
    let p = p.clone();
    tokio::task::spawn_blocking(move || {
        if let Err(e) = p.assessor.assess_session(&session_id) {
            log::warn!("assessment of {session_id} incomplete: {e}");
        }
    });
}

async fn submit(
    State(s): State<AppState>,
    Path(session_id): Path<String>,
) -> ApiResult<Json<SubmitView>> {
    let p = s.platform.clone();
    let sid = session_id.clone();
    let subs = blocking(move || p.sessions.submit(&sid).api()).await?;
    queue_assessment(&s.platform, session_id.clone());
    Ok(Json(SubmitView::new(&session_id, subs)))
}

/// Re-queue assessment of pending items.
async fn reassess(
    State(s): State<AppState>,
    Path(session_id): Path<String>,
) -> ApiResult<Response> {
    let p = s.platform.clone();
    let sid = session_id.clone();
    // Reject unknown and in-progress sessions before queueing.
    blocking(move || p.assessor.session_report(&sid).api()).await?;
    queue_assessment(&s.platform, session_id);
    Ok((StatusCode::ACCEPTED, Json(json!({ "status": "queued" }))).into_response())
}

async fn results(
    State(s): State<AppState>,
    Path(session_id): Path<String>,
) -> ApiResult<Json<ResultsView>> {
    blocking(move || {
        let report = s.platform.assessor.session_report(&session_id).api()?;
        let exam = s.platform.corpus.get_exam(&report.exam_id).api()?;
        Ok(Json(ResultsView::new(report, &exam)))
    })
    .await
}

// Admin routes.

async fn ingest_exam(_: Admin, State(s): State<AppState>, body: Bytes) -> ApiResult<Response> {
    blocking(move || {
        let out = s.platform.corpus.ingest_exam(&body).api()?;
        let status = if out.created {
            StatusCode::CREATED
        } else {
            StatusCode::OK
        };
        Ok((
            status,
            Json(json!({ "exam_id": out.exam_id, "created": out.created })),
        )
            .into_response())
    })
    .await
}

async fn get_scheme(
    _: Admin,
    State(s): State<AppState>,
    Path(exam_id): Path<String>,
) -> ApiResult<Response> {
    blocking(move || Ok(Json(s.platform.scheme(Principal::Admin, &exam_id)?).into_response())).await
}

async fn validate(_: Admin, State(s): State<AppState>) -> ApiResult<Response> {
    blocking(move || {
        let violations = s
            .platform
            .corpus
            .validate_corpus(Default::default())
            .api()?;
        Ok(Json(json!({ "violations": violations })).into_response())
    })
    .await
}

fn parse_time(q: &HashMap<String, String>, key: &str) -> ApiResult<Option<DateTime<Utc>>> {
    q.get(key)
        .map(|v| {
            DateTime::parse_from_rfc3339(v)
                .map(|t| t.with_timezone(&Utc))
                .map_err(|e| ApiError::bad_request(format!("{key}: {e}")))
        })
        .transpose()
}

pub fn export_filter(q: &HashMap<String, String>) -> ApiResult<ExportFilter> {
    Ok(ExportFilter {
        exam_id: q.get("exam").cloned(),
        subject: q.get("subject").cloned(),
        from: parse_time(q, "from")?,
        until: parse_time(q, "until")?,
    })
}

async fn export(
    _: Admin,
    State(s): State<AppState>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let filter = export_filter(&q)?;
    blocking(move || {
        let bytes = s.platform.export_dataset(Principal::Admin, &filter)?;
        Ok(([(CONTENT_TYPE, "application/x-ndjson")], bytes).into_response())
    })
    .await
}

async fn ingest_grades(_: Admin, State(s): State<AppState>, body: Bytes) -> ApiResult<Response> {
    blocking(move || {
        let n = s.platform.harness.ingest_expert_grades(&body).api()?;
        Ok(Json(json!({ "ingested": n })).into_response())
    })
    .await
}

async fn start_run(_: Admin, State(s): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let body: EvalRunBody = parse_body(&body)?;
    let req = EvalRequest {
        run_id: body.run_id,
        submission_ids: body.submission_ids,
        providers: body.providers,
        concurrency: body.concurrency,
        language: body.language,
    };
    blocking(move || {
        let summary = s
            .platform
            .harness
            .run_offline_eval(&req, &AtomicBool::new(false))
            .api()?;
        Ok(Json(summary).into_response())
    })
    .await
}

async fn list_runs(_: Admin, State(s): State<AppState>) -> ApiResult<Response> {
    blocking(move || Ok(Json(s.platform.harness.list_runs().api()?).into_response())).await
}

async fn run_report(
    _: Admin,
    State(s): State<AppState>,
    Path(run_id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let policy: ConsensusPolicy = q
        .get("policy")
        .map(|p| p.parse())
        .transpose()
        .map_err(|e: String| ApiError::bad_request(e))?
        .unwrap_or_default();
    let format: ReportFormat = q
        .get("format")
        .map(|f| f.parse())
        .transpose()
        .map_err(|e: String| ApiError::bad_request(e))?
        .unwrap_or(ReportFormat::Json);
    let top: usize = q
        .get("top")
        .map(|t| t.parse())
        .transpose()
        .map_err(|_| ApiError::bad_request("top must be a non-negative integer"))?
        .unwrap_or(10);
    blocking(move || {
        let h = &s.platform.harness;
        h.get_run(&run_id).api()?;
        let truth = h.build_ground_truth(policy).api()?;
        let report = h.compute_agreement(&run_id, &truth, top).api()?;
        let content_type = match format {
            ReportFormat::Json => "application/json",
            ReportFormat::Delimited => "text/csv; charset=utf-8",
            ReportFormat::Text => "text/plain; charset=utf-8",
        };
        Ok(([(CONTENT_TYPE, content_type)], report.render(format)).into_response())
    })
    .await
}
