use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use demoflow_core::capture::Recorder;
use demoflow_core::execution::{
    BrowserDriver, ExecEvent, ExecutionPlan, ExecutionResult, Limits, NodeAgent, SessionStore,
};
use demoflow_core::llm::Gateway;
use demoflow_core::workflow::{diff, validate, Workflow, WorkflowEdit};
use serde::{Deserialize, Serialize};
use tokio::sync::broadcast;

use crate::config::{ConfigError, DriverSource, ServiceConfig};
use crate::error::{ApiError, ErrorBody};

const STREAM_CAPACITY: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    Recording,
    Reviewing,
    Executing,
}

impl Phase {
    /// Transitions a client may request. `executing` is entered and left
    /// only by the execution endpoint itself.
    pub fn client_may_move(self, next: Phase) -> bool {
        use Phase::*;
        matches!(
            (self, next),
            (Idle, Recording) | (Idle, Reviewing) | (Recording, Reviewing) | (Recording, Idle) | (Reviewing, Recording) | (Reviewing, Idle)
        ) || self == next && next != Executing
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Running,
    Completed,
    Aborted,
    Failed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub phase: Phase,
    pub current_workflow_version: u64,
    /// Raw events received so far.
    pub log_cursor: usize,
    /// Events that survived filtering.
    pub kept_events: usize,
    pub running_execution: Option<String>,
    pub origin_template: Option<String>,
    pub last_error: Option<ErrorBody>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowDiff {
    pub version: u64,
    pub base_version: u64,
    pub edits: Vec<WorkflowEdit>,
    /// Full workflow when the client has nothing to apply edits to.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<Workflow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseChange {
    pub phase: Phase,
    pub version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalResult {
    pub execution_id: String,
    pub status: ExecStatus,
    pub final_output: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

/// One server-sent event.
#[derive(Debug, Clone, PartialEq)]
pub enum StreamEvent {
    WorkflowDiff(WorkflowDiff),
    NodeStatus(ExecEvent),
    Phase(PhaseChange),
    FinalResult(FinalResult),
}

impl StreamEvent {
    pub fn name(&self) -> &'static str {
        match self {
            StreamEvent::WorkflowDiff(_) => "workflow_diff",
            StreamEvent::NodeStatus(_) => "node_status",
            StreamEvent::Phase(_) => "phase",
            StreamEvent::FinalResult(_) => "final_result",
        }
    }

    pub fn data(&self) -> String {
        match self {
            StreamEvent::WorkflowDiff(d) => serde_json::to_string(d),
            StreamEvent::NodeStatus(e) => serde_json::to_string(e),
            StreamEvent::Phase(p) => serde_json::to_string(p),
            StreamEvent::FinalResult(r) => serde_json::to_string(r),
        }
        .expect("stream events serialize")
    }
}

#[derive(Debug, Clone)]
pub struct ExecRecord {
    pub status: ExecStatus,
    pub plan: ExecutionPlan,
    pub result: Option<ExecutionResult>,
    pub error: Option<ErrorBody>,
}

pub struct Inner {
    pub phase: Phase,
    pub version: u64,
    pub workflow: Option<Workflow>,
    pub recorder: Recorder,
    pub log_cursor: usize,
    pub kept: usize,
    /// Kept events not yet reflected in a generated workflow.
    pub dirty: bool,
    pub last_event: Instant,
    pub regen_active: bool,
    /// Regenerate once more without waiting, even outside `recording`.
    pub flush: bool,
    pub executions: BTreeMap<String, ExecRecord>,
    pub running: Option<String>,
    pub origin_template: Option<String>,
    pub last_error: Option<ErrorBody>,
}

pub struct SessionHandle {
    pub id: String,
    pub inner: Mutex<Inner>,
    pub tx: broadcast::Sender<StreamEvent>,
    /// Held by whichever generation or adaptation is running.
    pub gen_lock: tokio::sync::Mutex<()>,
    /// Cuts short a pending regeneration wait.
    pub wake: tokio::sync::Notify,
}

impl SessionHandle {
    pub fn new(id: String) -> Self {
        let (tx, _) = broadcast::channel(STREAM_CAPACITY);
        SessionHandle {
            inner: Mutex::new(Inner {
                phase: Phase::Idle,
                version: 0,
                workflow: None,
                recorder: Recorder::new(id.clone()),
                log_cursor: 0,
                kept: 0,
                dirty: false,
                last_event: Instant::now(),
                regen_active: false,
                flush: false,
                executions: BTreeMap::new(),
                running: None,
                origin_template: None,
                last_error: None,
            }),
            id,
            tx,
            gen_lock: tokio::sync::Mutex::new(()),
            wake: tokio::sync::Notify::new(),
        }
    }

    pub fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn publish(&self, event: StreamEvent) {
        let _ = self.tx.send(event);
    }

    pub fn state(&self, inner: &Inner) -> SessionState {
        SessionState {
            session_id: self.id.clone(),
            phase: inner.phase,
            current_workflow_version: inner.version,
            log_cursor: inner.log_cursor,
            kept_events: inner.kept,
            running_execution: inner.running.clone(),
            origin_template: inner.origin_template.clone(),
            last_error: inner.last_error.clone(),
        }
    }

    /// Stores `next` as a new version and streams the edit script from the
    /// previous one. Unchanged workflows keep their version.
    pub fn store_workflow(&self, inner: &mut Inner, next: Workflow) -> Result<u64, ApiError> {
        let report = validate(&next);
        if !report.is_executable() {
            return Err(ApiError::unprocessable("invalid_workflow", "workflow does not validate").details(report));
        }
        if inner.workflow.as_ref().is_some_and(|w| w.to_json() == next.to_json()) {
            return Ok(inner.version);
        }
        let base_version = inner.version;
        let event = match &inner.workflow {
            Some(old) => WorkflowDiff {
                version: base_version + 1,
                base_version,
                edits: diff(old, &next),
                snapshot: None,
            },
            None => WorkflowDiff {
                version: base_version + 1,
                base_version,
                edits: Vec::new(),
                snapshot: Some(next.clone()),
            },
        };
        inner.version += 1;
        inner.workflow = Some(next);
        self.publish(StreamEvent::WorkflowDiff(event));
        Ok(inner.version)
    }

    pub fn set_phase(&self, inner: &mut Inner, phase: Phase) {
        if inner.phase == phase {
            return;
        }
        inner.phase = phase;
        self.publish(StreamEvent::Phase(PhaseChange {
            phase,
            version: inner.version,
        }));
    }

    /// Events a new subscriber needs before live updates.
    pub fn greeting(&self, inner: &Inner) -> Vec<StreamEvent> {
        let mut out = vec![StreamEvent::Phase(PhaseChange {
            phase: inner.phase,
            version: inner.version,
        })];
        if let Some(w) = &inner.workflow {
            out.push(StreamEvent::WorkflowDiff(WorkflowDiff {
                version: inner.version,
                base_version: inner.version,
                edits: Vec::new(),
                snapshot: Some(w.clone()),
            }));
        }
        out
    }
}

/// Shared service state.
pub struct App {
    pub gateway: Gateway,
    pub agent: Arc<dyn NodeAgent>,
    pub driver: DriverSource,
    pub limits: Limits,
    pub throttle: Duration,
    pub store: Arc<SessionStore>,
    sessions: RwLock<HashMap<String, Arc<SessionHandle>>>,
}

impl App {
    pub fn new(
        gateway: Gateway,
        agent: Arc<dyn NodeAgent>,
        driver: DriverSource,
        store: Arc<SessionStore>,
    ) -> Self {
        App {
            gateway,
            agent,
            driver,
            limits: Limits::default(),
            throttle: Duration::from_millis(ServiceConfig::default().throttle_ms),
            store,
            sessions: RwLock::new(HashMap::new()),
        }
    }

    pub fn from_config(config: &ServiceConfig) -> Result<Self, ConfigError> {
        let gateway = config.gateway()?;
        let agent = config.agent(&gateway);
        let store = config.open_store(Some(std::path::Path::new(crate::config::DEFAULT_STORE_FILE)))?;
        let mut app = App::new(gateway, agent, config.driver_source()?, Arc::new(store));
        app.limits = config.limits();
        app.throttle = Duration::from_millis(config.throttle_ms);
        Ok(app)
    }

    pub fn with_throttle(mut self, throttle: Duration) -> Self {
        self.throttle = throttle;
        self
    }

    pub fn with_limits(mut self, limits: Limits) -> Self {
        self.limits = limits;
        self
    }

    pub fn with_driver(mut self, f: impl Fn() -> Arc<dyn BrowserDriver> + Send + Sync + 'static) -> Self {
        self.driver = DriverSource::custom(f);
        self
    }

    pub fn create_session(&self) -> Arc<SessionHandle> {
        let handle = Arc::new(SessionHandle::new(uuid::Uuid::new_v4().to_string()));
        self.sessions
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(handle.id.clone(), handle.clone());
        handle
    }

    pub fn session(&self, id: &str) -> Result<Arc<SessionHandle>, ApiError> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session", id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn executing_is_not_client_reachable() {
        for p in [Phase::Idle, Phase::Recording, Phase::Reviewing, Phase::Executing] {
            assert!(!p.client_may_move(Phase::Executing));
        }
        assert!(!Phase::Executing.client_may_move(Phase::Reviewing));
        assert!(Phase::Recording.client_may_move(Phase::Reviewing));
        assert!(Phase::Reviewing.client_may_move(Phase::Recording));
        assert!(!Phase::Idle.client_may_move(Phase::Executing));
    }

    #[test]
    fn unchanged_workflows_keep_their_version() {
        let s = SessionHandle::new("s".into());
        let mut rx = s.tx.subscribe();
        let w = Workflow::from_edges(&["A", "B"], &[("A", "B")]);
        let mut inner = s.lock();
        assert_eq!(s.store_workflow(&mut inner, w.clone()).unwrap(), 1);
        assert_eq!(s.store_workflow(&mut inner, w).unwrap(), 1);
        let bad = Workflow::from_edges(&["A", "B"], &[("A", "B"), ("B", "A")]);
        assert!(s.store_workflow(&mut inner, bad).is_err());
        assert_eq!(inner.version, 1);
        assert!(matches!(rx.try_recv(), Ok(StreamEvent::WorkflowDiff(WorkflowDiff { snapshot: Some(_), .. }))));
        assert!(rx.try_recv().is_err());
    }
}
