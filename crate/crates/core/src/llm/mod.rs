//! Chat-completion gateway with JSON-only output discipline.
//!
//! Every agent call goes through [`Gateway`]: the raw completion is reduced
//! to one JSON object by [`extract_json`], checked against a
//! [`JsonContract`], and retried with a corrective instruction when it does
//! not comply.

pub mod mock;
pub mod network;

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use serde_json::Value;
use thiserror::Error;
use tokio::sync::Semaphore;

pub const DEFAULT_MAX_RETRIES: usize = 2;
pub const DEFAULT_CONCURRENCY: usize = 4;
pub const CORRECTIVE_MESSAGE: &str =
    "Your previous output was not a single valid JSON object. Return exactly one JSON object.";

#[derive(Debug, Clone, PartialEq)]
pub struct LlmRequest {
    pub system_prompt: String,
    pub user_content: String,
    pub model_id: String,
    pub temperature: f64,
}

impl LlmRequest {
    pub fn check(&self) -> Result<(), LlmError> {
        if self.system_prompt.trim().is_empty() || self.user_content.trim().is_empty() {
            return Err(LlmError::InvalidRequest("prompts must be non-empty".into()));
        }
        if !(0.0..=1.0).contains(&self.temperature) {
            return Err(LlmError::InvalidRequest(format!(
                "temperature {} outside [0, 1]",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    #[error("transient backend failure: {0}")]
    Transient(String),
    #[error("backend failure: {0}")]
    Fatal(String),
}

#[async_trait]
pub trait LlmBackend: Send + Sync {
    async fn complete(&self, request: &LlmRequest) -> Result<String, BackendError>;
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no JSON object found in model output")]
    Extraction { raw: String },
    #[error("{contract} contract violated after {attempts} attempt(s): {reason}")]
    ContractViolation {
        contract: String,
        attempts: usize,
        reason: String,
        last_raw: String,
    },
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Output contracts of the five pipeline agents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum JsonContract {
    ContextInfo,
    ActionInfo,
    Workflow,
    SemanticWorkflow,
    FilledWorkflow,
}

impl JsonContract {
    pub fn schema_name(self) -> &'static str {
        match self {
            JsonContract::ContextInfo => "context_info",
            JsonContract::ActionInfo => "action_info",
            JsonContract::Workflow => "workflow",
            JsonContract::SemanticWorkflow => "semantic_workflow",
            JsonContract::FilledWorkflow => "filled_workflow",
        }
    }

    /// Key paths; `[]` applies the rest of the path to every array element.
    pub fn required_keys(self) -> &'static [&'static str] {
        const NODE: [&str; 5] = [
            "nodes[].name",
            "nodes[].parent",
            "nodes[].children",
            "nodes[].tools",
            "nodes[].prompt",
        ];
        match self {
            JsonContract::ContextInfo => &["goal", "interests", "constraints", "values", "entities"],
            JsonContract::ActionInfo => &["actions", "sites", "phases", "confidence"],
            JsonContract::Workflow => &[
                "nodes", NODE[0], NODE[1], NODE[2], NODE[3], NODE[4],
            ],
            JsonContract::SemanticWorkflow => &[
                "nodes",
                NODE[0],
                NODE[1],
                NODE[2],
                NODE[3],
                NODE[4],
                "semantic_variables",
                "semantic_variables[].placeholder",
                "semantic_variables[].semantic_description",
                "semantic_variables[].paths",
                "semantic_variables[].example_values",
            ],
            JsonContract::FilledWorkflow => &[
                "timestamp",
                "context_info",
                "action_info",
                "nodes",
                NODE[0],
                NODE[1],
                NODE[2],
                NODE[3],
                NODE[4],
                "fill_notes",
            ],
        }
    }

    pub fn missing_keys(self, value: &Value) -> Vec<&'static str> {
        self.required_keys()
            .iter()
            .copied()
            .filter(|p| !has_path(value, p))
            .collect()
    }
}

fn has_path(value: &Value, path: &str) -> bool {
    let (head, rest) = match path.split_once('.') {
        Some((h, r)) => (h, Some(r)),
        None => (path, None),
    };
    if let Some(key) = head.strip_suffix("[]") {
        return match value.get(key) {
            Some(Value::Array(items)) => items
                .iter()
                .all(|item| rest.is_none_or(|r| has_path(item, r))),
            _ => false,
        };
    }
    match (value.get(head), rest) {
        (Some(v), Some(r)) => has_path(v, r),
        (Some(_), None) => true,
        (None, _) => false,
    }
}

fn strip_fences(raw: &str) -> String {
    raw.lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// First well-formed JSON object in `raw`, ignoring code fences and any
/// surrounding prose.
pub fn extract_json(raw: &str) -> Result<Value, LlmError> {
    let cleaned = strip_fences(raw);
    for (start, _) in cleaned.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&cleaned[start..]).into_iter::<Value>();
        if let Some(Ok(value @ Value::Object(_))) = stream.next() {
            return Ok(value);
        }
    }
    Err(LlmError::Extraction {
        raw: raw.to_string(),
    })
}

#[derive(Debug, Clone)]
pub struct Completion<T> {
    pub value: T,
    pub retries: usize,
    pub raw: String,
}

/// Bounded-concurrency front for one backend.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn LlmBackend>,
    permits: Arc<Semaphore>,
    pub model_id: String,
    pub temperature: f64,
    pub max_retries: usize,
}

impl Gateway {
    pub fn new(backend: Arc<dyn LlmBackend>) -> Self {
        Gateway {
            backend,
            permits: Arc::new(Semaphore::new(DEFAULT_CONCURRENCY)),
            model_id: "mock".to_string(),
            temperature: 0.0,
            max_retries: DEFAULT_MAX_RETRIES,
        }
    }

    pub fn mock() -> Self {
        Gateway::new(Arc::new(mock::MockBackend))
    }

    pub fn with_model(mut self, model_id: impl Into<String>) -> Self {
        self.model_id = model_id.into();
        self
    }

    pub fn with_concurrency(mut self, limit: usize) -> Self {
        self.permits = Arc::new(Semaphore::new(limit.max(1)));
        self
    }

    pub fn with_max_retries(mut self, retries: usize) -> Self {
        self.max_retries = retries;
        self
    }

    pub fn request(&self, system_prompt: String, user_content: String) -> LlmRequest {
        LlmRequest {
            system_prompt,
            user_content,
            model_id: self.model_id.clone(),
            temperature: self.temperature,
        }
    }

    pub async fn complete_validated(
        &self,
        request: &LlmRequest,
        contract: JsonContract,
        max_retries: usize,
    ) -> Result<Completion<Value>, LlmError> {
        self.complete_checked(request, contract, max_retries, Ok).await
    }

    /// Like [`Gateway::complete_validated`], with an extra semantic check.
    /// A failing check counts as a contract violation and is retried.
    pub async fn complete_checked<T>(
        &self,
        request: &LlmRequest,
        contract: JsonContract,
        max_retries: usize,
        check: impl Fn(Value) -> Result<T, String>,
    ) -> Result<Completion<T>, LlmError> {
        self.complete_with_keys(request, contract.schema_name(), contract.required_keys(), max_retries, check)
            .await
    }

    pub async fn complete_with_keys<T>(
        &self,
        request: &LlmRequest,
        contract_name: &str,
        required: &[&str],
        max_retries: usize,
        check: impl Fn(Value) -> Result<T, String>,
    ) -> Result<Completion<T>, LlmError> {
        request.check()?;
        let mut current = request.clone();
        let mut last_raw = String::new();
        let mut reason = String::new();
        for attempt in 0..=max_retries {
            let raw = {
                let _permit = self.permits.acquire().await.expect("semaphore never closed");
                self.backend.complete(&current).await
            };
            let raw = match raw {
                Ok(raw) => raw,
                Err(BackendError::Transient(msg)) => {
                    tracing::warn!(attempt, contract = contract_name, "transient backend failure: {msg}");
                    if attempt == max_retries {
                        return Err(BackendError::Transient(msg).into());
                    }
                    continue;
                }
                Err(fatal) => return Err(fatal.into()),
            };
            let outcome = extract_json(&raw)
                .map_err(|_| "no JSON object found".to_string())
                .and_then(|value| {
                    let missing: Vec<_> = required.iter().filter(|p| !has_path(&value, p)).collect();
                    if missing.is_empty() {
                        Ok(value)
                    } else {
                        Err(format!(
                            "missing required keys: {}",
                            missing.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(", ")
                        ))
                    }
                })
                .and_then(&check);
            match outcome {
                Ok(value) => {
                    return Ok(Completion {
                        value,
                        retries: attempt,
                        raw,
                    })
                }
                Err(why) => {
                    tracing::debug!(attempt, contract = contract_name, "output rejected: {why}");
                    reason = why;
                    last_raw = raw;
                    current.user_content =
                        format!("{}\n\n{} ({})", request.user_content, CORRECTIVE_MESSAGE, reason);
                }
            }
        }
        Err(LlmError::ContractViolation {
            contract: contract_name.to_string(),
            attempts: max_retries + 1,
            reason,
            last_raw,
        })
    }
}

/// Replays a fixed transcript; records every request it receives.
#[derive(Default)]
pub struct ScriptedBackend {
    replies: Mutex<VecDeque<Result<String, BackendError>>>,
    seen: Mutex<Vec<LlmRequest>>,
}

impl ScriptedBackend {
    pub fn new(replies: impl IntoIterator<Item = Result<String, BackendError>>) -> Self {
        ScriptedBackend {
            replies: Mutex::new(replies.into_iter().collect()),
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<LlmRequest> {
        self.seen.lock().unwrap().clone()
    }
}

#[async_trait]
impl LlmBackend for ScriptedBackend {
    async fn complete(&self, request: &LlmRequest) -> Result<String, BackendError> {
        self.seen.lock().unwrap().push(request.clone());
        self.replies
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| Err(BackendError::Fatal("script exhausted".into())))
    }
}
