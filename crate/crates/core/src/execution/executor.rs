use std::collections::BTreeMap;
use std::panic::AssertUnwindSafe;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use futures::FutureExt;
use serde::{Deserialize, Serialize};
use tokio::task::JoinSet;

use super::agent::{AgentError, NodeAgent, NodeTask, ToolBox, ToolError};
use super::driver::BrowserDriver;
use super::session::Session;
use super::{plan, ExecutionError, ExecutionPlan, ExecutionResult, Limits, NodeResult, NodeStatus};
use crate::workflow::Workflow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeState {
    Pending,
    Running,
    Succeeded,
    Failed,
    Skipped,
}

impl From<NodeStatus> for NodeState {
    fn from(s: NodeStatus) -> Self {
        match s {
            NodeStatus::Succeeded => NodeState::Succeeded,
            NodeStatus::Failed => NodeState::Failed,
            NodeStatus::Skipped => NodeState::Skipped,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ExecEvent {
    NodeStatus {
        execution_id: String,
        node: String,
        state: NodeState,
        at: DateTime<Utc>,
    },
    Finished {
        execution_id: String,
        final_output: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        aborted: Option<String>,
    },
}

type Observer = Arc<dyn Fn(ExecEvent) + Send + Sync>;

pub struct Executor {
    driver: Arc<dyn BrowserDriver>,
    agent: Arc<dyn NodeAgent>,
    limits: Limits,
    observer: Option<Observer>,
}

struct Finished {
    result: NodeResult,
    disconnected: Option<String>,
}

impl Executor {
    pub fn new(driver: Arc<dyn BrowserDriver>, agent: Arc<dyn NodeAgent>) -> Self {
        Executor {
            driver,
            agent,
            limits: Limits::default(),
            observer: None,
        }
    }

    pub fn with_limits(mut self, limits: Limits) -> Self {
        self.limits = limits;
        self
    }

    /// Receives every status change as it happens.
    pub fn with_observer(mut self, f: impl Fn(ExecEvent) + Send + Sync + 'static) -> Self {
        self.observer = Some(Arc::new(f));
        self
    }

    fn emit(&self, event: ExecEvent) {
        if let Some(f) = &self.observer {
            f(event);
        }
    }

    fn status(&self, execution_id: &str, node: &str, state: NodeState) {
        self.emit(ExecEvent::NodeStatus {
            execution_id: execution_id.to_string(),
            node: node.to_string(),
            state,
            at: Utc::now(),
        });
    }

    fn record(
        &self,
        session: &Session,
        execution_id: &str,
        result: NodeResult,
        results: &mut BTreeMap<String, NodeResult>,
    ) -> Result<(), ExecutionError> {
        session.store.append(&session.id, execution_id, &result)?;
        self.status(execution_id, &result.node_name, result.status.into());
        results.insert(result.node_name.clone(), result);
        Ok(())
    }

    pub async fn execute(
        &self,
        w: &Workflow,
        session: &Session,
        execution_id: &str,
    ) -> Result<ExecutionResult, ExecutionError> {
        let plan = plan(w)?;
        let order = w.topological_order().expect("planned workflows are acyclic");
        for name in &order {
            self.status(execution_id, name, NodeState::Pending);
        }
        let mut results: BTreeMap<String, NodeResult> = BTreeMap::new();
        let mut skipped_by: BTreeMap<String, String> = BTreeMap::new();

        for level in &plan.levels {
            let mut running = JoinSet::new();
            for name in level {
                if let Some(cause) = skipped_by.get(name) {
                    let now = Utc::now();
                    let skipped = NodeResult {
                        node_name: name.clone(),
                        status: NodeStatus::Skipped,
                        output: format!("skipped: upstream node {cause} failed"),
                        started: now,
                        finished: now,
                        actions_taken: Vec::new(),
                        final_url: None,
                    };
                    self.record(session, execution_id, skipped, &mut results)?;
                    continue;
                }
                let ancestors = w.ancestors(name);
                let task = NodeTask {
                    node: w.node(name).expect("planned node exists").clone(),
                    ancestors: order
                        .iter()
                        .filter(|n| ancestors.contains(*n))
                        .filter_map(|n| results.get(n).cloned())
                        .collect(),
                };
                self.status(execution_id, name, NodeState::Running);
                running.spawn(run_node(task, self.driver.clone(), self.agent.clone(), self.limits));
            }
            let mut abort: Option<String> = None;
            while let Some(joined) = running.join_next().await {
                let done = joined.expect("node tasks catch their own panics");
                if done.result.status == NodeStatus::Failed {
                    for d in w.descendants(&done.result.node_name) {
                        skipped_by.entry(d).or_insert_with(|| done.result.node_name.clone());
                    }
                }
                if let Some(reason) = done.disconnected {
                    abort.get_or_insert(reason);
                }
                self.record(session, execution_id, done.result, &mut results)?;
            }
            if let Some(reason) = abort {
                let partial = ExecutionResult {
                    final_output: String::new(),
                    results,
                    plan,
                    warnings: vec![format!("aborted: {reason}")],
                };
                self.emit(ExecEvent::Finished {
                    execution_id: execution_id.to_string(),
                    final_output: String::new(),
                    aborted: Some(reason.clone()),
                });
                return Err(ExecutionError::Aborted {
                    reason,
                    partial: Box::new(partial),
                });
            }
        }

        let (final_output, warnings) = terminal_output(w, &plan, &results);
        self.emit(ExecEvent::Finished {
            execution_id: execution_id.to_string(),
            final_output: final_output.clone(),
            aborted: None,
        });
        Ok(ExecutionResult {
            results,
            final_output,
            plan,
            warnings,
        })
    }
}

async fn run_node(task: NodeTask, driver: Arc<dyn BrowserDriver>, agent: Arc<dyn NodeAgent>, limits: Limits) -> Finished {
    let started = Utc::now();
    let mut tools = ToolBox::new(driver, &task.node.tools, limits.max_actions);
    let outcome = AssertUnwindSafe(tokio::time::timeout(limits.node_timeout, agent.run(&task, &mut tools)))
        .catch_unwind()
        .await;
    let finished = Utc::now();
    let mut disconnected = None;
    let (status, output, final_url) = match outcome {
        Ok(Ok(Ok(out))) => (NodeStatus::Succeeded, out.output, out.final_url),
        Ok(Ok(Err(e))) => {
            if let AgentError::Tool(ToolError::Disconnected(m)) = &e {
                disconnected = Some(m.clone());
            }
            (NodeStatus::Failed, format!("error: {e}"), None)
        }
        Ok(Err(_)) => (
            NodeStatus::Failed,
            format!("error: timed out after {:?}", limits.node_timeout),
            None,
        ),
        Err(_) => (NodeStatus::Failed, "error: node agent panicked".to_string(), None),
    };
    Finished {
        result: NodeResult {
            node_name: task.node.name.clone(),
            status,
            output,
            started,
            finished,
            actions_taken: tools.into_records(),
            final_url,
        },
        disconnected,
    }
}

/// Output of the single sink; with several sinks, the deepest one (ties
/// broken by name) and a warning.
pub(crate) fn terminal_output(
    w: &Workflow,
    plan: &ExecutionPlan,
    results: &BTreeMap<String, NodeResult>,
) -> (String, Vec<String>) {
    let mut sinks: Vec<&str> = w.sinks().iter().map(|n| n.name.as_str()).collect();
    let output = |name: &str| results.get(name).map(|r| r.output.clone()).unwrap_or_default();
    match sinks.len() {
        0 => (String::new(), vec!["workflow has no sink node".into()]),
        1 => (output(sinks[0]), Vec::new()),
        n => {
            sinks.sort_by_key(|s| (std::cmp::Reverse(plan.level_of(s).unwrap_or(0)), *s));
            (
                output(sinks[0]),
                vec![format!("workflow has {n} sink nodes; final output taken from {}", sinks[0])],
            )
        }
    }
}
