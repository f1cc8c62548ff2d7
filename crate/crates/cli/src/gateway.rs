//! HTTP/SSE service over the orchestrator.
//!
//! Each session lives in a [`Slot`]: the session itself behind a mutex (one
//! writer), a copy of its event log for readers, and a watch channel that
//! carries the latest event sequence number. Auto-driven sessions step on a
//! blocking worker until they finish or reach a gate. Every transition is
//! persisted under the store directory as `report.json` plus
//! `ledger.provlog`, and `artifact.ppm` once there is one.

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use aegis_core::orchestrator::{Event, Intervention, Orchestrator, OrchestratorError, Session};
use aegis_core::planner::PlannerError;
use aegis_core::provenance::{export, ProvenanceError};
use aegis_core::raster::write_ppm;
use aegis_core::watermark::DEFAULT_KEY;
use axum::body::Bytes;
use axum::extract::{Multipart, Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::watch;

use crate::commands::{detection_json, encode_png, verify_ledger, verify_watermark, write_outputs, CommandError};
use crate::settings::{parse_key, ConfigFlags};
use crate::view::{session_summary, session_view};

/// Error envelope: `{"code", "message", "detail"}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub detail: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            detail: json!({}),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"code": self.code, "message": self.message, "detail": self.detail});
        (self.status, Json(body)).into_response()
    }
}

impl From<OrchestratorError> for ApiError {
    fn from(e: OrchestratorError) -> Self {
        let message = e.to_string();
        match e {
            OrchestratorError::PromptRejected(p) => {
                let detail = match p {
                    PlannerError::SyntaxError { line, col, .. }
                    | PlannerError::UnknownKind { line, col, .. }
                    | PlannerError::UnknownBackground { line, col, .. }
                    | PlannerError::DuplicateElementName { line, col, .. }
                    | PlannerError::BadAttributeValue { line, col, .. } => json!({"line": line, "col": col}),
                    _ => json!({}),
                };
                ApiError::bad_request(message).with_detail(detail)
            }
            OrchestratorError::IllegalState(state) => {
                ApiError::new(StatusCode::CONFLICT, "illegal_state", message).with_detail(json!({"state": state}))
            }
            OrchestratorError::IllegalIntervention { kind, state } => ApiError::new(StatusCode::CONFLICT, "illegal_state", message)
                .with_detail(json!({"kind": kind, "state": state})),
            OrchestratorError::InvalidIntervention(_) | OrchestratorError::InvalidConfig(_) => ApiError::bad_request(message),
        }
    }
}

impl From<CommandError> for ApiError {
    fn from(e: CommandError) -> Self {
        match e {
            CommandError::Usage(m) => ApiError::bad_request(m),
            CommandError::BadImage(_) | CommandError::Watermark(_) => ApiError::bad_request(e.to_string()),
            CommandError::Io(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub struct Slot {
    session: Mutex<Session>,
    events: RwLock<Vec<Event>>,
    latest: watch::Sender<u64>,
    autorun: bool,
    driving: AtomicBool,
}

impl Slot {
    fn events_after(&self, seq: u64) -> Vec<Event> {
        let events = self.events.read().expect("event log lock");
        events.iter().filter(|e| e.seq > seq).cloned().collect()
    }
}

pub struct AppState {
    orchestrator: Orchestrator,
    store: PathBuf,
    sessions: RwLock<BTreeMap<String, Arc<Slot>>>,
}

impl AppState {
    pub fn new(store: PathBuf) -> Self {
        AppState {
            orchestrator: Orchestrator::default(),
            store,
            sessions: RwLock::new(BTreeMap::new()),
        }
    }

    pub fn with_orchestrator(store: PathBuf, orchestrator: Orchestrator) -> Self {
        AppState {
            orchestrator,
            ..AppState::new(store)
        }
    }

    fn slot(&self, id: &str) -> ApiResult<Arc<Slot>> {
        self.sessions
            .read()
            .expect("session table lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no session '{id}'")))
    }

    /// Copies new events out, persists, then wakes stream readers.
    fn publish(&self, slot: &Slot, s: &Session) {
        let seq = s.events().len() as u64;
        {
            let mut events = slot.events.write().expect("event log lock");
            let have = events.len();
            events.extend_from_slice(&s.events()[have..]);
        }
        if let Err(e) = write_outputs(s, &self.store.join(&s.id)) {
            tracing::error!(session = %s.id, "persisting session failed: {e}");
        }
        slot.latest.send_replace(seq);
    }
}

type Shared = Arc<AppState>;

/// Steps the session on a blocking worker until it stops being steppable.
fn drive(app: Shared, slot: Arc<Slot>) {
    tokio::task::spawn_blocking(move || loop {
        if slot.driving.swap(true, Ordering::AcqRel) {
            return;
        }
        loop {
            let mut s = slot.session.lock().expect("session lock");
            match app.orchestrator.step(&mut s) {
                Ok(_) => app.publish(&slot, &s),
                Err(_) => break,
            }
        }
        slot.driving.store(false, Ordering::Release);
        // an intervention may have landed after the last failed step
        let s = slot.session.lock().expect("session lock");
        if s.state.is_terminal() || s.state.is_awaiting() {
            return;
        }
    });
}

pub fn router(app: Shared) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/events", get(events))
        .route("/sessions/{id}/interventions", post(intervene))
        .route("/sessions/{id}/step", post(step))
        .route("/sessions/{id}/artifact", get(artifact_ppm))
        .route("/sessions/{id}/artifact.png", get(artifact_png))
        .route("/sessions/{id}/attempts/{subtask}/{attempt}", get(attempt_png))
        .route("/sessions/{id}/ledger", get(ledger))
        .route("/verify/watermark", post(verify_watermark_route))
        .route("/verify/ledger", post(verify_ledger_route))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .method_not_allowed_fallback(|| async {
            ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "bad_request", "method not allowed")
        })
        .with_state(app)
}

async fn healthz() -> Json<Value> {
    Json(json!({"status": "ok"}))
}

async fn list_sessions(State(app): State<Shared>) -> Json<Value> {
    let slots: Vec<Arc<Slot>> = app.sessions.read().expect("session table lock").values().cloned().collect();
    let list: Vec<Value> = slots
        .iter()
        .map(|slot| session_summary(&slot.session.lock().expect("session lock")))
        .collect();
    Json(json!({ "sessions": list }))
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    prompt: String,
    #[serde(default)]
    config: ConfigFlags,
    /// Step automatically whenever the session is not at a gate.
    #[serde(default = "yes")]
    autorun: bool,
}

fn yes() -> bool {
    true
}

async fn create_session(State(app): State<Shared>, body: Bytes) -> ApiResult<Response> {
    let req: CreateRequest = parse_body(&body)?;
    let cfg = req.config.to_config().map_err(ApiError::bad_request)?;
    let session = app.orchestrator.start(&req.prompt, cfg)?;
    let id = session.id.clone();
    // identical prompt, config and fixed clock give the same id; hand back
    // the existing session rather than fork its ledger
    if let Ok(existing) = app.slot(&id) {
        let view = session_view(&existing.session.lock().expect("session lock"));
        return Ok((StatusCode::OK, Json(view)).into_response());
    }
    let (latest, _) = watch::channel(0);
    let slot = Arc::new(Slot {
        session: Mutex::new(session),
        events: RwLock::new(Vec::new()),
        latest,
        autorun: req.autorun,
        driving: AtomicBool::new(false),
    });
    app.sessions.write().expect("session table lock").insert(id.clone(), slot.clone());
    let view = {
        let s = slot.session.lock().expect("session lock");
        app.publish(&slot, &s);
        session_view(&s)
    };
    tracing::info!(session = %id, "created");
    if slot.autorun {
        drive(app.clone(), slot);
    }
    Ok((StatusCode::CREATED, [(header::LOCATION, format!("/sessions/{id}"))], Json(view)).into_response())
}

async fn get_session(State(app): State<Shared>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let slot = app.slot(&id)?;
    let view = session_view(&slot.session.lock().expect("session lock"));
    Ok(Json(view))
}

#[derive(Deserialize)]
struct EventsQuery {
    last_event_id: Option<u64>,
}

/// Replays events after `Last-Event-ID` (header, or `last_event_id` query
/// for clients that cannot set headers), then follows live.
async fn events(
    State(app): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
    headers: HeaderMap,
) -> ApiResult<Sse<impl Stream<Item = Result<SseEvent, Infallible>>>> {
    let slot = app.slot(&id)?;
    let from_header = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse().ok());
    let last = from_header.or(q.last_event_id).unwrap_or(0);
    let rx = slot.latest.subscribe();
    let state = (slot, rx, last, std::collections::VecDeque::<Event>::new());
    let stream = futures::stream::unfold(state, |(slot, mut rx, mut last, mut queue)| async move {
        loop {
            if let Some(e) = queue.pop_front() {
                last = e.seq;
                let sse = SseEvent::default()
                    .id(e.seq.to_string())
                    .event("transition")
                    .json_data(&e)
                    .expect("events serialize");
                return Some((Ok(sse), (slot, rx, last, queue)));
            }
            // mark seen before reading so a publish in between still wakes us
            rx.borrow_and_update();
            queue.extend(slot.events_after(last));
            if queue.is_empty() && rx.changed().await.is_err() {
                return None;
            }
        }
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::new().interval(Duration::from_secs(15))))
}

async fn intervene(State(app): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let slot = app.slot(&id)?;
    let iv: Intervention = parse_body(&body)?;
    let app2 = app.clone();
    let slot2 = slot.clone();
    let ev = tokio::task::spawn_blocking(move || {
        let mut s = slot2.session.lock().expect("session lock");
        let ev = app2.orchestrator.intervene(&mut s, iv)?;
        app2.publish(&slot2, &s);
        Ok::<_, OrchestratorError>(ev)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    tracing::info!(session = %id, kind = ?ev.action, "intervention");
    if slot.autorun {
        drive(app, slot);
    }
    Ok(Json(json!({ "event": ev })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StepRequest {
    #[serde(default = "one")]
    count: u32,
}

fn one() -> u32 {
    1
}

/// Manual stepping. Stops early at a gate or the end; stepping a session
/// that cannot move at all is an `illegal_state` error.
async fn step(State(app): State<Shared>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<Value>> {
    let slot = app.slot(&id)?;
    let req: StepRequest = if body.is_empty() { StepRequest { count: 1 } } else { parse_body(&body)? };
    if req.count == 0 {
        return Err(ApiError::bad_request("count must be at least 1"));
    }
    let result = tokio::task::spawn_blocking(move || {
        let mut s = slot.session.lock().expect("session lock");
        let mut taken = Vec::new();
        for _ in 0..req.count {
            match app.orchestrator.step(&mut s) {
                Ok(ev) => {
                    app.publish(&slot, &s);
                    taken.push(ev);
                }
                Err(e) if taken.is_empty() => return Err(e),
                Err(_) => break,
            }
        }
        Ok((taken, s.state.clone()))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    let (taken, state) = result?;
    Ok(Json(json!({"events": taken, "state": state})))
}

fn finished_artifact(app: &AppState, id: &str) -> ApiResult<aegis_core::raster::Image> {
    let slot = app.slot(id)?;
    let s = slot.session.lock().expect("session lock");
    s.artifact()
        .map(|a| a.image.clone())
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "illegal_state", format!("session is {}, no artifact yet", s.state)))
}

async fn artifact_ppm(State(app): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    let img = finished_artifact(&app, &id)?;
    Ok(([(header::CONTENT_TYPE, "image/x-portable-pixmap")], write_ppm(&img)).into_response())
}

async fn artifact_png(State(app): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    let img = finished_artifact(&app, &id)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], encode_png(&img)).into_response())
}

/// One generated attempt as a PNG sprite, for review galleries.
async fn attempt_png(
    State(app): State<Shared>,
    Path((id, subtask, attempt)): Path<(String, String, u32)>,
) -> ApiResult<Response> {
    let slot = app.slot(&id)?;
    let img = {
        let s = slot.session.lock().expect("session lock");
        let a = attempt
            .checked_sub(1)
            .and_then(|i| s.attempts(&subtask).get(i as usize))
            .ok_or_else(|| ApiError::not_found(format!("no attempt {attempt} for '{subtask}'")))?;
        a.component.image.clone()
    };
    Ok(([(header::CONTENT_TYPE, "image/png")], encode_png(&img)).into_response())
}

async fn ledger(State(app): State<Shared>, Path(id): Path<String>) -> ApiResult<Response> {
    let slot = app.slot(&id)?;
    let bytes = export(slot.session.lock().expect("session lock").ledger());
    Ok(([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], bytes).into_response())
}

/// Multipart fields: `image` (PPM or PNG), optional `key` and `reference`.
async fn verify_watermark_route(mut form: Multipart) -> ApiResult<Json<Value>> {
    let (mut image, mut key, mut reference) = (None, DEFAULT_KEY, None);
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| ApiError::bad_request(format!("malformed multipart body: {e}")))?
    {
        let name = field.name().unwrap_or_default().to_owned();
        let data = field
            .bytes()
            .await
            .map_err(|e| ApiError::bad_request(format!("reading field '{name}': {e}")))?;
        let text = || String::from_utf8(data.to_vec()).map_err(|_| ApiError::bad_request(format!("field '{name}' is not text")));
        match name.as_str() {
            "image" => image = Some(data.clone()),
            "key" => key = parse_key(text()?.trim()).map_err(ApiError::bad_request)?,
            "reference" => reference = Some(text()?),
            other => return Err(ApiError::bad_request(format!("unexpected field '{other}'"))),
        }
    }
    let image = image.ok_or_else(|| ApiError::bad_request("missing 'image' field"))?;
    let d = tokio::task::spawn_blocking(move || verify_watermark(&image, key, reference.as_deref()))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    Ok(Json(detection_json(&d)))
}

/// Body is a raw `.provlog`.
async fn verify_ledger_route(body: Bytes) -> ApiResult<Json<Value>> {
    match verify_ledger(&body) {
        Ok(n) => Ok(Json(json!({"ok": true, "records": n}))),
        Err(ProvenanceError::VerificationFailed(v)) => Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "verification_failed",
            v.to_string(),
        )
        .with_detail(json!({"index": v.index, "kind": v.kind}))),
        Err(e) => Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "verification_failed", e.to_string())),
    }
}

/// Binds and serves until ctrl-c.
pub async fn serve(bind: &str, store: PathBuf) -> Result<(), std::io::Error> {
    std::fs::create_dir_all(&store)?;
    let probe = store.join(".write-test");
    std::fs::write(&probe, b"")?;
    std::fs::remove_file(&probe)?;
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    let app = router(Arc::new(AppState::new(store)));
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
