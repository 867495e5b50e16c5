//! Deterministic rule-based backend.
//!
//! Dispatches on the first line of the rendered system prompt and reads the
//! slot payload from the user content, so it behaves like a model that
//! follows each agent prompt to the letter.

mod analysis;
mod filler;
mod identifier;
mod synthesis;

use async_trait::async_trait;
use serde::de::DeserializeOwned;
use serde_json::Value;

use super::{extract_json, BackendError, LlmBackend, LlmRequest};
use crate::prompts;

pub use analysis::{parse_trace, PhaseTrace, TraceItem};

#[derive(Debug, Clone, Copy, Default)]
pub struct MockBackend;

#[async_trait]
impl LlmBackend for MockBackend {
    async fn complete(&self, request: &LlmRequest) -> Result<String, BackendError> {
        respond(request).map_err(BackendError::Fatal)
    }
}

fn field<T: DeserializeOwned>(payload: &Value, key: &str) -> Result<T, String> {
    let v = payload
        .get(key)
        .ok_or_else(|| format!("payload lacks `{key}`"))?;
    serde_json::from_value(v.clone()).map_err(|e| format!("bad `{key}`: {e}"))
}

/// Produces the raw completion text for one request.
pub fn respond(request: &LlmRequest) -> Result<String, String> {
    let payload = extract_json(&request.user_content).map_err(|_| "user content carries no JSON payload".to_string())?;
    let system = request.system_prompt.as_str();
    let out = if system.starts_with(prompts::CONTEXT_ANALYSIS.preamble()) {
        let log: String = field(&payload, "log_text")?;
        serde_json::to_value(analysis::context(&log)).expect("serializes")
    } else if system.starts_with(prompts::ACTION_ANALYSIS.preamble()) {
        let log: String = field(&payload, "log_text")?;
        serde_json::to_value(analysis::actions(&log)).expect("serializes")
    } else if system.starts_with(prompts::WORKFLOW_SYNTHESIS.preamble()) {
        let w = synthesis::synthesize(&field(&payload, "context_info")?, &field(&payload, "action_info")?);
        serde_json::to_value(w).expect("serializes")
    } else if system.starts_with(prompts::IDENTIFIER.preamble()) {
        let w = identifier::semanticize(&field(&payload, "current_workflow")?);
        serde_json::to_value(w).expect("serializes")
    } else if system.starts_with(prompts::FILLER.preamble()) {
        let w = filler::fill(
            &field(&payload, "semantic_workflow")?,
            &field::<String>(&payload, "user_instruction")?,
        );
        serde_json::to_value(w).expect("serializes")
    } else {
        return Err("unrecognized agent prompt".into());
    };
    Ok(out.to_string())
}
