use std::convert::Infallible;
use std::sync::Arc;
use std::time::Instant;

use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::routing::{get, post};
use axum::{Json, Router};
use demoflow_core::capture::parse_jsonl;
use demoflow_core::execution::session::StoredTemplate;
use demoflow_core::execution::{plan, ExecutionError, ExecutionResult, Executor, Session};
use demoflow_core::generalization::{adapt, FillNote};
use demoflow_core::generation::generate;
use demoflow_core::workflow::{apply_edit, validate, Workflow, WorkflowEdit};
use futures::{Stream, StreamExt};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast::error::RecvError;

use crate::error::{ApiError, ErrorBody};
use crate::state::{
    App, ExecRecord, ExecStatus, FinalResult, Phase, SessionHandle, SessionState, StreamEvent, WorkflowDiff,
};

type AppState = Arc<App>;
type ApiResult<T> = Result<T, ApiError>;

pub fn router(app: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/events", post(ingest_events))
        .route("/sessions/{id}/phase", post(change_phase))
        .route("/sessions/{id}/workflow", get(get_workflow).put(edit_workflow))
        .route("/sessions/{id}/adapt", post(adapt_workflow))
        .route("/sessions/{id}/execute", post(start_execution))
        .route("/sessions/{id}/executions/{eid}", get(get_execution))
        .route("/sessions/{id}/stream", get(stream))
        .route("/templates", post(create_template).get(list_templates))
        .route("/templates/{tid}", get(get_template))
        .route("/templates/{tid}/instantiate", post(instantiate_template))
        .with_state(app)
}

async fn create_session(State(app): State<AppState>) -> (StatusCode, Json<SessionState>) {
    let s = app.create_session();
    let state = s.state(&s.lock());
    (StatusCode::CREATED, Json(state))
}

async fn get_session(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionState>> {
    let s = app.session(&id)?;
    let state = s.state(&s.lock());
    Ok(Json(state))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct IngestReply {
    pub received: usize,
    pub kept: usize,
    pub kept_total: usize,
    pub log_cursor: usize,
    pub regeneration_scheduled: bool,
}

async fn ingest_events(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: String,
) -> ApiResult<Json<IngestReply>> {
    let s = app.session(&id)?;
    let raw = parse_jsonl(&body).map_err(|e| ApiError::unprocessable("invalid_event", e.to_string()).stage("capture"))?;
    let mut inner = s.lock();
    if !matches!(inner.phase, Phase::Recording | Phase::Reviewing) {
        return Err(ApiError::conflict(
            "phase_conflict",
            format!("events are not accepted while {:?}", inner.phase).to_lowercase(),
        ));
    }
    // All or nothing: a bad event leaves the recording untouched.
    let mut recorder = inner.recorder.clone();
    let mut kept = 0;
    for (i, event) in raw.iter().enumerate() {
        let survived = recorder.ingest(event).map_err(|e| {
            ApiError::unprocessable("invalid_event", format!("event {}: {e}", i + 1)).stage("capture")
        })?;
        kept += usize::from(survived);
    }
    inner.recorder = recorder;
    inner.log_cursor += raw.len();
    inner.kept += kept;
    let mut scheduled = false;
    if kept > 0 {
        inner.dirty = true;
        inner.last_event = Instant::now();
        if inner.phase == Phase::Recording {
            scheduled = true;
            ensure_regen(&app, &s, &mut inner);
        }
    }
    Ok(Json(IngestReply {
        received: raw.len(),
        kept,
        kept_total: inner.kept,
        log_cursor: inner.log_cursor,
        regeneration_scheduled: scheduled,
    }))
}

fn ensure_regen(app: &AppState, s: &Arc<SessionHandle>, inner: &mut crate::state::Inner) {
    if inner.regen_active {
        return;
    }
    inner.regen_active = true;
    tokio::spawn(regen_loop(app.clone(), s.clone()));
}

/// Regenerates once the recording has been quiet for the throttle
/// interval, repeating while new events keep arriving.
async fn regen_loop(app: AppState, s: Arc<SessionHandle>) {
    loop {
        let wait = {
            let inner = s.lock();
            if inner.flush {
                std::time::Duration::ZERO
            } else {
                (inner.last_event + app.throttle).saturating_duration_since(Instant::now())
            }
        };
        if !wait.is_zero() {
            tokio::select! {
                _ = tokio::time::sleep(wait) => {}
                _ = s.wake.notified() => {}
            }
            continue;
        }
        let _guard = s.gen_lock.lock().await;
        let log = {
            let mut inner = s.lock();
            let go = inner.dirty && (inner.phase == Phase::Recording || inner.flush);
            if !go {
                inner.regen_active = false;
                inner.flush = false;
                return;
            }
            inner.dirty = false;
            inner.flush = false;
            inner.recorder.snapshot()
        };
        let generated = generate(&app.gateway, &log).await;
        let mut inner = s.lock();
        match generated.map_err(ApiError::from).and_then(|w| s.store_workflow(&mut inner, w)) {
            Ok(_) => inner.last_error = None,
            Err(e) => {
                tracing::warn!(session = %s.id, "regeneration failed: {}", e.body.message);
                inner.last_error = Some(e.body);
            }
        }
    }
}

#[derive(Debug, Deserialize)]
struct PhaseRequest {
    phase: Phase,
}

async fn change_phase(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<PhaseRequest>,
) -> ApiResult<Json<SessionState>> {
    let s = app.session(&id)?;
    let mut inner = s.lock();
    let from = inner.phase;
    if !from.client_may_move(req.phase) {
        return Err(ApiError::conflict(
            "phase_conflict",
            format!("cannot move from {from:?} to {:?}", req.phase).to_lowercase(),
        ));
    }
    s.set_phase(&mut inner, req.phase);
    match (from, req.phase) {
        (Phase::Recording, Phase::Reviewing) if inner.dirty => {
            inner.flush = true;
            ensure_regen(&app, &s, &mut inner);
            s.wake.notify_one();
        }
        (_, Phase::Recording) if inner.dirty => ensure_regen(&app, &s, &mut inner),
        _ => {}
    }
    Ok(Json(s.state(&inner)))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WorkflowReply {
    pub version: u64,
    pub workflow: Workflow,
}

fn current(s: &SessionHandle) -> ApiResult<WorkflowReply> {
    let inner = s.lock();
    let workflow = inner
        .workflow
        .clone()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no_workflow", "session has no workflow yet"))?;
    Ok(WorkflowReply {
        version: inner.version,
        workflow,
    })
}

async fn get_workflow(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<WorkflowReply>> {
    Ok(Json(current(&*app.session(&id)?)?))
}

#[derive(Debug, Deserialize)]
struct EditRequest {
    #[serde(default)]
    expected_version: Option<u64>,
    edit: WorkflowEdit,
}

fn header_version(headers: &HeaderMap) -> ApiResult<Option<u64>> {
    let Some(v) = headers.get("if-match") else {
        return Ok(None);
    };
    v.to_str()
        .ok()
        .map(|t| t.trim().trim_matches('"'))
        .and_then(|t| t.parse().ok())
        .map(Some)
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "bad_version", "If-Match must be a version number"))
}

async fn edit_workflow(
    State(app): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Json(req): Json<EditRequest>,
) -> ApiResult<Json<WorkflowReply>> {
    let s = app.session(&id)?;
    let expected = match req.expected_version {
        Some(v) => v,
        None => header_version(&headers)?.ok_or_else(|| {
            ApiError::new(
                StatusCode::PRECONDITION_REQUIRED,
                "missing_version",
                "send expected_version or If-Match",
            )
        })?,
    };
    let mut inner = s.lock();
    if inner.version != expected {
        return Err(ApiError::conflict(
            "version_conflict",
            format!("expected version {expected}, current is {}", inner.version),
        )
        .details(serde_json::json!({ "current_version": inner.version })));
    }
    if !matches!(inner.phase, Phase::Reviewing | Phase::Idle) {
        return Err(ApiError::conflict(
            "phase_conflict",
            format!("workflow cannot be edited while {:?}", inner.phase).to_lowercase(),
        ));
    }
    let base = inner
        .workflow
        .as_ref()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no_workflow", "session has no workflow yet"))?;
    let next = apply_edit(base, &req.edit)?;
    let version = s.store_workflow(&mut inner, next)?;
    Ok(Json(WorkflowReply {
        version,
        workflow: inner.workflow.clone().expect("just stored"),
    }))
}

#[derive(Debug, Deserialize)]
struct AdaptRequest {
    instruction: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AdaptReply {
    pub version: u64,
    pub workflow: Workflow,
    pub fill_notes: Vec<FillNote>,
    pub notes: Vec<String>,
}

async fn adapt_workflow(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<AdaptRequest>,
) -> ApiResult<Json<AdaptReply>> {
    let s = app.session(&id)?;
    let _guard = s.gen_lock.lock().await;
    let (base, base_version) = {
        let inner = s.lock();
        if !matches!(inner.phase, Phase::Reviewing | Phase::Idle) {
            return Err(ApiError::conflict(
                "phase_conflict",
                format!("cannot adapt while {:?}", inner.phase).to_lowercase(),
            ));
        }
        let w = inner
            .workflow
            .clone()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no_workflow", "session has no workflow yet"))?;
        (w, inner.version)
    };
    let adaptation = adapt(&app.gateway, &base, &req.instruction).await?;
    let mut inner = s.lock();
    if inner.version != base_version {
        return Err(ApiError::conflict(
            "version_conflict",
            "workflow changed while the adaptation was running",
        ));
    }
    let version = s.store_workflow(&mut inner, adaptation.workflow.clone())?;
    Ok(Json(AdaptReply {
        version,
        fill_notes: adaptation.workflow.fill_notes.clone().unwrap_or_default(),
        workflow: adaptation.workflow,
        notes: adaptation.notes,
    }))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExecutionStarted {
    pub execution_id: String,
    pub workflow_version: u64,
}

async fn start_execution(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<(StatusCode, Json<ExecutionStarted>)> {
    let s = app.session(&id)?;
    let (workflow, execution_id, version) = {
        let mut inner = s.lock();
        if let Some(eid) = &inner.running {
            return Err(ApiError::conflict("execution_running", format!("execution {eid} is still running")));
        }
        if !matches!(inner.phase, Phase::Reviewing | Phase::Idle) {
            return Err(ApiError::conflict(
                "phase_conflict",
                format!("cannot execute while {:?}", inner.phase).to_lowercase(),
            ));
        }
        let w = inner
            .workflow
            .clone()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no_workflow", "session has no workflow yet"))?;
        let p = plan(&w).map_err(|_| {
            ApiError::unprocessable("invalid_workflow", "workflow is not executable").details(validate(&w))
        })?;
        let eid = uuid::Uuid::new_v4().to_string();
        inner.executions.insert(
            eid.clone(),
            ExecRecord {
                status: ExecStatus::Running,
                plan: p,
                result: None,
                error: None,
            },
        );
        inner.running = Some(eid.clone());
        s.set_phase(&mut inner, Phase::Executing);
        (w, eid, inner.version)
    };
    tokio::spawn(run_execution(app.clone(), s.clone(), workflow, execution_id.clone()));
    Ok((
        StatusCode::ACCEPTED,
        Json(ExecutionStarted {
            execution_id,
            workflow_version: version,
        }),
    ))
}

async fn run_execution(app: AppState, s: Arc<SessionHandle>, w: Workflow, eid: String) {
    let outcome: Result<ExecutionResult, (ExecStatus, ErrorBody, Option<ExecutionResult>)> =
        match app.driver.connect().await {
            Err(e) => Err((
                ExecStatus::Failed,
                ApiError::new(StatusCode::BAD_GATEWAY, "driver_failure", e.to_string())
                    .stage("driver")
                    .body,
                None,
            )),
            Ok(driver) => {
                let sink = s.clone();
                let executor = Executor::new(driver, app.agent.clone())
                    .with_limits(app.limits)
                    .with_observer(move |e| {
                        if matches!(e, demoflow_core::execution::ExecEvent::NodeStatus { .. }) {
                            sink.publish(StreamEvent::NodeStatus(e));
                        }
                    });
                let session = Session::new(s.id.clone(), app.store.clone());
                executor.execute(&w, &session, &eid).await.map_err(|e| match e {
                    ExecutionError::Aborted { reason, partial } => (
                        ExecStatus::Aborted,
                        ApiError::new(StatusCode::BAD_GATEWAY, "execution_aborted", reason)
                            .stage("driver")
                            .body,
                        Some(*partial),
                    ),
                    other => (
                        ExecStatus::Failed,
                        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "execution_failed", other.to_string())
                            .stage("execution")
                            .body,
                        None,
                    ),
                })
            }
        };
    let mut inner = s.lock();
    let record = inner.executions.get_mut(&eid).expect("registered at start");
    let final_event = match outcome {
        Ok(result) => {
            record.status = ExecStatus::Completed;
            let ev = FinalResult {
                execution_id: eid.clone(),
                status: ExecStatus::Completed,
                final_output: result.final_output.clone(),
                error: None,
            };
            record.result = Some(result);
            ev
        }
        Err((status, error, partial)) => {
            record.status = status;
            record.error = Some(error.clone());
            let final_output = partial.as_ref().map(|p| p.final_output.clone()).unwrap_or_default();
            record.result = partial;
            FinalResult {
                execution_id: eid.clone(),
                status,
                final_output,
                error: Some(error),
            }
        }
    };
    inner.running = None;
    s.publish(StreamEvent::FinalResult(final_event));
    s.set_phase(&mut inner, Phase::Reviewing);
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExecutionReply {
    pub execution_id: String,
    pub status: ExecStatus,
    pub result: ExecutionResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

async fn get_execution(
    State(app): State<AppState>,
    Path((id, eid)): Path<(String, String)>,
) -> ApiResult<Json<ExecutionReply>> {
    let s = app.session(&id)?;
    let record = s
        .lock()
        .executions
        .get(&eid)
        .cloned()
        .ok_or_else(|| ApiError::not_found("execution", &eid))?;
    let result = match record.result {
        Some(r) => r,
        None => ExecutionResult {
            results: app.store.replay(&id, &eid)?,
            final_output: String::new(),
            plan: record.plan,
            warnings: Vec::new(),
        },
    };
    Ok(Json(ExecutionReply {
        execution_id: eid,
        status: record.status,
        result,
        error: record.error,
    }))
}

async fn stream(
    State(app): State<AppState>,
    Path(id): Path<String>,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    let s = app.session(&id)?;
    let (rx, greeting) = {
        let inner = s.lock();
        (s.tx.subscribe(), s.greeting(&inner))
    };
    let live = futures::stream::unfold((rx, s), |(mut rx, s)| async move {
        loop {
            match rx.recv().await {
                Ok(ev) => return Some((ev, (rx, s))),
                Err(RecvError::Lagged(_)) => {
                    let resync = {
                        let inner = s.lock();
                        inner.workflow.clone().map(|w| {
                            StreamEvent::WorkflowDiff(WorkflowDiff {
                                version: inner.version,
                                base_version: inner.version,
                                edits: Vec::new(),
                                snapshot: Some(w),
                            })
                        })
                    };
                    if let Some(ev) = resync {
                        return Some((ev, (rx, s)));
                    }
                }
                Err(RecvError::Closed) => return None,
            }
        }
    });
    let events = futures::stream::iter(greeting)
        .chain(live)
        .map(|ev| Ok(Event::default().event(ev.name()).data(ev.data())));
    Ok(Sse::new(events).keep_alive(KeepAlive::default()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateRecord {
    pub template_id: String,
    pub name: String,
    pub workflow: Workflow,
    pub lineage: Option<String>,
    pub created_at: String,
    pub content_hash: String,
}

impl TryFrom<StoredTemplate> for TemplateRecord {
    type Error = ApiError;

    fn try_from(t: StoredTemplate) -> Result<Self, ApiError> {
        let workflow = Workflow::from_json(&t.workflow_json).map_err(|e| {
            ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "store_failure", e.to_string()).stage("store")
        })?;
        Ok(TemplateRecord {
            template_id: t.template_id,
            name: t.name,
            workflow,
            lineage: t.lineage,
            created_at: t.created_at,
            content_hash: t.content_hash,
        })
    }
}

#[derive(Debug, Deserialize)]
struct TemplateRequest {
    name: String,
    #[serde(default)]
    workflow: Option<Workflow>,
    /// Saves this session's current workflow instead.
    #[serde(default)]
    session_id: Option<String>,
    #[serde(default)]
    lineage: Option<String>,
}

async fn create_template(
    State(app): State<AppState>,
    Json(req): Json<TemplateRequest>,
) -> ApiResult<(StatusCode, Json<TemplateRecord>)> {
    let (workflow, inherited) = match (req.workflow, &req.session_id) {
        (Some(w), None) => (w, None),
        (None, Some(sid)) => {
            let s = app.session(sid)?;
            let origin = s.lock().origin_template.clone();
            (current(&s)?.workflow, origin)
        }
        _ => {
            return Err(ApiError::unprocessable(
                "bad_template",
                "give exactly one of `workflow` or `session_id`",
            ))
        }
    };
    let report = validate(&workflow);
    if !report.is_executable() {
        return Err(ApiError::unprocessable("invalid_workflow", "workflow does not validate").details(report));
    }
    let lineage = req.lineage.or(inherited);
    if let Some(parent) = &lineage {
        if app.store.get_template(parent)?.is_none() {
            return Err(ApiError::unprocessable("unknown_lineage", format!("unknown parent template `{parent}`")));
        }
    }
    let stored = StoredTemplate {
        template_id: uuid::Uuid::new_v4().to_string(),
        name: req.name,
        content_hash: workflow.content_hash(),
        workflow_json: workflow.to_json(),
        lineage,
        created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
    };
    app.store.put_template(&stored)?;
    Ok((StatusCode::CREATED, Json(stored.try_into()?)))
}

async fn list_templates(State(app): State<AppState>) -> ApiResult<Json<Vec<TemplateRecord>>> {
    let records = app
        .store
        .list_templates()?
        .into_iter()
        .map(TemplateRecord::try_from)
        .collect::<Result<_, _>>()?;
    Ok(Json(records))
}

async fn get_template(State(app): State<AppState>, Path(tid): Path<String>) -> ApiResult<Json<TemplateRecord>> {
    let t = app.store.get_template(&tid)?.ok_or_else(|| ApiError::not_found("template", &tid))?;
    Ok(Json(t.try_into()?))
}

async fn instantiate_template(
    State(app): State<AppState>,
    Path(tid): Path<String>,
) -> ApiResult<(StatusCode, Json<SessionState>)> {
    let t: TemplateRecord = app
        .store
        .get_template(&tid)?
        .ok_or_else(|| ApiError::not_found("template", &tid))?
        .try_into()?;
    let s = app.create_session();
    let mut inner = s.lock();
    s.store_workflow(&mut inner, t.workflow)?;
    inner.origin_template = Some(tid);
    s.set_phase(&mut inner, Phase::Reviewing);
    Ok((StatusCode::CREATED, Json(s.state(&inner))))
}
