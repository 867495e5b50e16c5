//! Three-agent generation: context analysis and action analysis run
//! concurrently over the rendered log, then synthesis merges both into a
//! workflow graph.

mod types;

use std::fmt;
use std::sync::Mutex;

use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::capture::{render_log, CaptureError, DemoLog};
use crate::llm::{Gateway, JsonContract, LlmError};
use crate::prompts;
use crate::workflow::{diff, validate, Workflow, WorkflowEdit, WorkflowNode};

pub use types::*;

/// Sections every generated node prompt carries, in order.
pub const PROMPT_SECTIONS: [&str; 6] = [
    "Purpose:",
    "Inputs:",
    "Outputs:",
    "Preconditions:",
    "Steps:",
    "Contingency:",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GenStage {
    Capture,
    Context,
    Action,
    Synthesis,
}

impl fmt::Display for GenStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GenStage::Capture => "capture",
            GenStage::Context => "context",
            GenStage::Action => "action",
            GenStage::Synthesis => "synthesis",
        })
    }
}

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("demonstration log is empty")]
    EmptyLog,
    #[error("capture: {0}")]
    Capture(#[from] CaptureError),
    #[error("{stage} agent: {source}")]
    Agent {
        stage: GenStage,
        #[source]
        source: LlmError,
    },
    #[error("synthesis produced no valid workflow: {reason}")]
    SynthesisFailed {
        reason: String,
        candidate: Option<Box<Workflow>>,
    },
}

impl GenerationError {
    pub fn stage(&self) -> GenStage {
        match self {
            GenerationError::EmptyLog | GenerationError::Capture(_) => GenStage::Capture,
            GenerationError::Agent { stage, .. } => *stage,
            GenerationError::SynthesisFailed { .. } => GenStage::Synthesis,
        }
    }
}

fn agent_err(stage: GenStage) -> impl FnOnce(LlmError) -> GenerationError {
    move |source| GenerationError::Agent { stage, source }
}

pub async fn analyze_context(gateway: &Gateway, log_text: &str) -> Result<ContextInfo, GenerationError> {
    if log_text.trim().is_empty() {
        return Err(GenerationError::EmptyLog);
    }
    let system = prompts::CONTEXT_ANALYSIS.render(&[("log_text", log_text)]);
    let request = gateway.request(system, json!({ "log_text": log_text }).to_string());
    let ctx = gateway
        .complete_checked(&request, JsonContract::ContextInfo, gateway.max_retries, |v| {
            let ctx: ContextInfo = serde_json::from_value(v).map_err(|e| e.to_string())?;
            ctx.check()?;
            Ok(ctx)
        })
        .await
        .map_err(agent_err(GenStage::Context))?
        .value;
    for v in ctx.values.iter().filter(|v| !log_text.contains(v.as_str())) {
        tracing::warn!(value = %v, "context value does not occur verbatim in the log");
    }
    Ok(ctx)
}

pub async fn analyze_actions(gateway: &Gateway, log_text: &str) -> Result<ActionInfo, GenerationError> {
    if log_text.trim().is_empty() {
        return Err(GenerationError::EmptyLog);
    }
    let system = prompts::ACTION_ANALYSIS.render(&[("log_text", log_text)]);
    let request = gateway.request(system, json!({ "log_text": log_text }).to_string());
    Ok(gateway
        .complete_checked(&request, JsonContract::ActionInfo, gateway.max_retries, |v| {
            let act: ActionInfo = serde_json::from_value(v).map_err(|e| e.to_string())?;
            act.check()?;
            Ok(act)
        })
        .await
        .map_err(agent_err(GenStage::Action))?
        .value)
}

/// Checks a synthesized workflow: valid, single sink, sectioned prompts.
pub fn check_generated(w: &Workflow) -> Result<(), String> {
    let report = validate(w);
    if let Some(e) = report.errors.first() {
        return Err(e.message.clone());
    }
    let sinks = w.sinks();
    if sinks.len() != 1 {
        return Err(format!("expected exactly one sink node, found {}", sinks.len()));
    }
    for node in &w.nodes {
        if let Some(s) = PROMPT_SECTIONS.iter().find(|s| !node.prompt.contains(*s)) {
            return Err(format!("prompt of `{}` lacks a {s} section", node.name));
        }
    }
    Ok(())
}

pub async fn synthesize(
    gateway: &Gateway,
    ctx: &ContextInfo,
    act: &ActionInfo,
) -> Result<Workflow, GenerationError> {
    let ctx_json = serde_json::to_string(ctx).expect("serializes");
    let act_json = serde_json::to_string(act).expect("serializes");
    let system = prompts::WORKFLOW_SYNTHESIS.render(&[("context_info", &ctx_json), ("action_info", &act_json)]);
    let payload = json!({ "context_info": ctx, "action_info": act }).to_string();
    let request = gateway.request(system, payload);
    let last = Mutex::new(None);
    let result = gateway
        .complete_checked(&request, JsonContract::Workflow, gateway.max_retries, |v| {
            let mut w: Workflow = serde_json::from_value(v).map_err(|e| e.to_string())?;
            w.context_info = ctx.clone();
            w.action_info = act.clone();
            w.semantic_variables = None;
            w.fill_notes = None;
            let verdict = check_generated(&w);
            *last.lock().unwrap() = Some(w.clone());
            verdict.map(|_| w)
        })
        .await;
    match result {
        Ok(c) => Ok(c.value),
        Err(LlmError::ContractViolation { reason, .. }) => Err(GenerationError::SynthesisFailed {
            reason,
            candidate: last.into_inner().unwrap().map(Box::new),
        }),
        Err(e) => Err(agent_err(GenStage::Synthesis)(e)),
    }
}

/// Two-node stand-in used when synthesis keeps failing.
pub fn degenerate_workflow(ctx: &ContextInfo, act: &ActionInfo) -> Workflow {
    let inputs = if ctx.values.is_empty() {
        "none".to_string()
    } else {
        ctx.values.iter().map(|v| format!("'{v}'")).collect::<Vec<_>>().join(", ")
    };
    let steps = if act.actions.is_empty() {
        "1) repeat the demonstrated task".to_string()
    } else {
        act.actions
            .iter()
            .enumerate()
            .map(|(i, a)| format!("{}) {a}", i + 1))
            .collect::<Vec<_>>()
            .join("; ")
    };
    let mut task = WorkflowNode::new(
        "CompleteTask",
        format!(
            "Purpose: {}. Inputs: {inputs}. Outputs: the information the task produces. \
             Preconditions: none. Steps: {steps}. Contingency: if a page differs from the \
             demonstration, locate the closest matching control and continue.",
            ctx.goal.trim_end_matches('.')
        ),
    );
    task.tools = vec![
        "browser.open".into(),
        "browser.click".into(),
        "browser.fill".into(),
        "browser.read".into(),
    ];
    task.children = vec!["SummarizeResults".into()];
    let mut sink = WorkflowNode::new("SummarizeResults", summary_prompt(&["CompleteTask"]));
    sink.parent = vec!["CompleteTask".into()];
    let mut w = Workflow::new("", vec![task, sink]);
    w.context_info = ctx.clone();
    w.action_info = act.clone();
    w
}

/// Prompt of the summarizing sink over the given upstream nodes.
pub fn summary_prompt(upstream: &[&str]) -> String {
    format!(
        "Purpose: synthesize the results of {} into a final answer for the user. \
         Inputs: outputs of upstream nodes. Outputs: a concise summary. \
         Preconditions: upstream nodes completed. Steps: 1) collect upstream outputs; \
         2) summarize them. Contingency: report which upstream results are missing.",
        upstream.join(", ")
    )
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub workflow: Workflow,
    /// Set when synthesis failed and the degenerate workflow was used.
    pub fallback_reason: Option<String>,
}

pub async fn generate_detailed(gateway: &Gateway, log: &DemoLog) -> Result<Generated, GenerationError> {
    if log.is_empty() {
        return Err(GenerationError::EmptyLog);
    }
    let log_text = render_log(log)?;
    let (ctx, act) = tokio::join!(analyze_context(gateway, &log_text), analyze_actions(gateway, &log_text));
    let (ctx, act) = (ctx?, act?);
    let (mut workflow, fallback_reason) = match synthesize(gateway, &ctx, &act).await {
        Ok(w) => (w, None),
        Err(GenerationError::SynthesisFailed { reason, .. }) => {
            tracing::warn!("synthesis failed, using degenerate workflow: {reason}");
            (degenerate_workflow(&ctx, &act), Some(reason))
        }
        Err(e) => return Err(e),
    };
    workflow.timestamp = log
        .events
        .last()
        .map(|e| e.timestamp.as_str().to_string())
        .unwrap_or_default();
    Ok(Generated {
        workflow,
        fallback_reason,
    })
}

pub async fn generate(gateway: &Gateway, log: &DemoLog) -> Result<Workflow, GenerationError> {
    Ok(generate_detailed(gateway, log).await?.workflow)
}

/// Full regeneration from the grown log plus the edit script from `prior`.
pub async fn regenerate_incremental(
    gateway: &Gateway,
    log: &DemoLog,
    prior: &Workflow,
) -> Result<(Workflow, Vec<WorkflowEdit>), GenerationError> {
    let next = generate(gateway, log).await?;
    let edits = diff(prior, &next);
    Ok((next, edits))
}
