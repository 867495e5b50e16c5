//! Leveled DAG execution.
//!
//! [`plan`] splits a workflow into Kahn levels; [`Executor`] runs levels in
//! order and the nodes of one level concurrently, each through a
//! [`NodeAgent`] bound to a permission-checked [`ToolBox`].

pub mod agent;
pub mod bundle;
pub mod cdp;
pub mod driver;
mod executor;
pub mod session;
pub mod simulated;

use std::collections::BTreeMap;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::workflow::{validate, ValidationReport, Workflow};

pub use agent::{AgentError, AgentOutcome, LlmNodeAgent, NodeAgent, NodeTask, ScriptedAgent, ToolBox, ToolError};
pub use driver::{BrowserDriver, DriverError, PageSnapshot, TabId};
pub use executor::{ExecEvent, Executor, NodeState};
pub use session::{Session, SessionStore, StoreError};
pub use simulated::SimulatedDriver;

pub const DEFAULT_MAX_ACTIONS: usize = 20;
pub const DEFAULT_NODE_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub max_actions: usize,
    #[serde(with = "secs")]
    pub node_timeout: Duration,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_actions: DEFAULT_MAX_ACTIONS,
            node_timeout: DEFAULT_NODE_TIMEOUT,
        }
    }
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        Duration::try_from_secs_f64(secs).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionPlan {
    pub levels: Vec<Vec<String>>,
    pub workflow_version: String,
}

impl ExecutionPlan {
    pub fn level_of(&self, name: &str) -> Option<usize> {
        self.levels.iter().position(|l| l.iter().any(|n| n == name))
    }
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("workflow is not executable ({} error(s))", .0.errors.len())]
    Invalid(ValidationReport),
}

/// Kahn leveling: roots at 0, every other node one below its deepest
/// parent; names sorted within a level.
pub fn plan(w: &Workflow) -> Result<ExecutionPlan, PlanError> {
    let report = validate(w);
    if !report.is_executable() {
        return Err(PlanError::Invalid(report));
    }
    let order = w.topological_order().ok_or(PlanError::Invalid(report))?;
    let mut level: BTreeMap<&str, usize> = BTreeMap::new();
    for name in &order {
        let node = w.node(name).expect("ordered nodes exist");
        let l = node
            .parent
            .iter()
            .map(|p| level[p.as_str()] + 1)
            .max()
            .unwrap_or(0);
        level.insert(name, l);
    }
    let depth = level.values().max().map(|m| m + 1).unwrap_or(0);
    let mut levels = vec![Vec::new(); depth];
    for (name, l) in level {
        levels[l].push(name.to_string());
    }
    Ok(ExecutionPlan {
        levels,
        workflow_version: w.content_hash(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeStatus {
    Succeeded,
    Failed,
    Skipped,
}

/// One driver call made on behalf of a node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub tool: String,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeResult {
    pub node_name: String,
    pub status: NodeStatus,
    pub output: String,
    pub started: DateTime<Utc>,
    pub finished: DateTime<Utc>,
    pub actions_taken: Vec<ActionRecord>,
    /// Page the node ended on, if it opened one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub results: BTreeMap<String, NodeResult>,
    pub final_output: String,
    pub plan: ExecutionPlan,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ExecutionResult {
    pub fn with_status(&self, status: NodeStatus) -> Vec<&str> {
        self.results
            .values()
            .filter(|r| r.status == status)
            .map(|r| r.node_name.as_str())
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum ExecutionError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("execution aborted: {reason}")]
    Aborted {
        reason: String,
        partial: Box<ExecutionResult>,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
}
