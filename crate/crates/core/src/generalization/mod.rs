//! Two-agent adaptation: the identifier abstracts task-specific literals into
//! semantic placeholders, the filler instantiates them for a new instruction.

pub mod placeholder;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::llm::{Gateway, JsonContract, LlmError};
use crate::prompts;
use crate::workflow::{validate, ValidationReport, Workflow};

use placeholder::{is_placeholder_name, token_re, workflow_tokens};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticVariable {
    pub placeholder: String,
    pub semantic_description: String,
    /// `nodes[<name>].prompt#<occurrence>` or `nodes[<name>].name`.
    pub paths: Vec<String>,
    pub example_values: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillSource {
    UserInstruction,
    InferredDefault,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FillNote {
    pub placeholder: String,
    pub decision: String,
    pub source: FillSource,
}

/// Workflow whose node names/prompts carry placeholders, plus the ledger.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticWorkflow(Workflow);

impl SemanticWorkflow {
    pub fn workflow(&self) -> &Workflow {
        &self.0
    }

    pub fn variables(&self) -> &[SemanticVariable] {
        self.0.semantic_variables.as_deref().unwrap_or_default()
    }

    pub fn into_inner(self) -> Workflow {
        self.0
    }

    /// Wraps a workflow after checking it against its source.
    pub fn checked(w: Workflow, source: &Workflow) -> Result<Self, String> {
        check_semantic(&w, source)?;
        Ok(SemanticWorkflow(w))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptStage {
    Precondition,
    Identifier,
    Filler,
}

impl fmt::Display for AdaptStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AdaptStage::Precondition => "precondition",
            AdaptStage::Identifier => "identifier",
            AdaptStage::Filler => "filler",
        })
    }
}

#[derive(Debug, Error)]
pub enum GeneralizationError {
    #[error("workflow is not valid ({} error(s))", .0.errors.len())]
    InvalidWorkflow(ValidationReport),
    #[error("{stage} agent: {source}")]
    Llm {
        stage: AdaptStage,
        #[source]
        source: LlmError,
    },
    #[error("semanticize inconsistency: {0}")]
    Inconsistent(String),
    #[error("unfilled placeholders: {}", .0.join(", "))]
    Unfilled(Vec<String>),
    #[error("instantiation failed: {0}")]
    Instantiation(String),
}

impl GeneralizationError {
    pub fn stage(&self) -> AdaptStage {
        match self {
            GeneralizationError::InvalidWorkflow(_) => AdaptStage::Precondition,
            GeneralizationError::Llm { stage, .. } => *stage,
            GeneralizationError::Inconsistent(_) => AdaptStage::Identifier,
            GeneralizationError::Unfilled(_) | GeneralizationError::Instantiation(_) => {
                AdaptStage::Filler
            }
        }
    }
}

const SECTIONS: [&str; 6] = [
    "Purpose:",
    "Inputs:",
    "Outputs:",
    "Preconditions:",
    "Steps:",
    "Contingency:",
];

/// Removes the `Steps:` section (up to `Contingency:` or the end).
pub fn strip_steps(prompt: &str) -> String {
    let Some(start) = prompt.find("Steps:") else {
        return prompt.to_string();
    };
    let end = prompt[start..]
        .find("Contingency:")
        .map(|i| start + i)
        .unwrap_or(prompt.len());
    format!("{}{}", prompt[..start].trim_end(), {
        let rest = &prompt[end..];
        if rest.is_empty() {
            String::new()
        } else {
            format!(" {rest}")
        }
    })
}

/// Same node count, per-index tools, and the same edge set once names are
/// mapped by index.
pub fn check_structure(a: &Workflow, b: &Workflow) -> Result<(), String> {
    if a.nodes.len() != b.nodes.len() {
        return Err(format!("node count changed from {} to {}", a.nodes.len(), b.nodes.len()));
    }
    let mut rename = BTreeMap::new();
    for (x, y) in a.nodes.iter().zip(&b.nodes) {
        if x.tools != y.tools {
            return Err(format!("tools of `{}` changed", x.name));
        }
        if rename.insert(x.name.as_str(), y.name.as_str()).is_some() {
            return Err(format!("duplicate node name `{}`", x.name));
        }
    }
    if rename.values().collect::<BTreeSet<_>>().len() != rename.len() {
        return Err("node names collide after substitution".into());
    }
    let mapped: BTreeSet<(String, String)> = a
        .edges()
        .into_iter()
        .filter_map(|(f, t)| Some((rename.get(f.as_str())?.to_string(), rename.get(t.as_str())?.to_string())))
        .collect();
    if mapped != b.edges() {
        return Err("edge set changed".into());
    }
    for (x, y) in a.nodes.iter().zip(&b.nodes) {
        let px: BTreeSet<_> = x.parent.iter().filter_map(|p| rename.get(p.as_str()).copied()).collect();
        let py: BTreeSet<_> = y.parent.iter().map(String::as_str).collect();
        if px != py {
            return Err(format!("parents of `{}` changed", y.name));
        }
    }
    Ok(())
}

/// Ledger bijection: placeholder tokens introduced into node names/prompts
/// (tokens already present in the source do not count) equal the ledger.
pub fn check_ledger(sw: &Workflow, source: &Workflow) -> Result<(), String> {
    let vars = sw.semantic_variables.as_deref().unwrap_or_default();
    let pre_existing = workflow_tokens(source);
    let mut ledger = BTreeSet::new();
    for v in vars {
        if !is_placeholder_name(&v.placeholder) {
            return Err(format!("`{}` is not an UPPER_SNAKE_CASE placeholder", v.placeholder));
        }
        if !ledger.insert(v.placeholder.clone()) {
            return Err(format!("placeholder `{}` listed twice", v.placeholder));
        }
        if pre_existing.contains(&v.placeholder) {
            return Err(format!("placeholder `{}` already occurs in the source", v.placeholder));
        }
        if v.paths.is_empty() {
            return Err(format!("placeholder `{}` has no paths", v.placeholder));
        }
        if v.example_values.is_empty() || v.example_values.len() > 3 {
            return Err(format!("placeholder `{}` needs 1-3 example values", v.placeholder));
        }
    }
    let introduced: BTreeSet<String> = workflow_tokens(sw).difference(&pre_existing).cloned().collect();
    if introduced != ledger {
        let missing: Vec<_> = introduced.difference(&ledger).cloned().collect();
        let orphan: Vec<_> = ledger.difference(&introduced).cloned().collect();
        return Err(format!(
            "ledger mismatch: unlisted tokens {missing:?}, unused entries {orphan:?}"
        ));
    }
    Ok(())
}

fn check_semantic(sw: &Workflow, source: &Workflow) -> Result<(), String> {
    if sw.semantic_variables.is_none() {
        return Err("missing semantic_variables".into());
    }
    if sw.timestamp != source.timestamp {
        return Err("timestamp changed".into());
    }
    check_structure(source, sw)?;
    for (a, b) in source.nodes.iter().zip(&sw.nodes) {
        for section in &SECTIONS[..4] {
            if a.prompt.contains(section) && !b.prompt.contains(section) {
                return Err(format!("prompt of `{}` lost its {section} section", b.name));
            }
        }
    }
    check_ledger(sw, source)
}

const INCONSISTENT: &str = "inconsistent: ";

pub async fn semanticize(
    gateway: &Gateway,
    w: &Workflow,
    user_text: &str,
) -> Result<SemanticWorkflow, GeneralizationError> {
    let report = validate(w);
    if !report.is_executable() {
        return Err(GeneralizationError::InvalidWorkflow(report));
    }
    let current = serde_json::to_string(w).expect("workflow serializes");
    let system = prompts::IDENTIFIER.render(&[("current_workflow", &current), ("user_text", user_text)]);
    let payload = json!({"current_workflow": w, "user_text": user_text}).to_string();
    let request = gateway.request(system, payload);
    let completion = gateway
        .complete_checked(&request, JsonContract::SemanticWorkflow, gateway.max_retries, |v| {
            let mut sw: Workflow = serde_json::from_value(v).map_err(|e| e.to_string())?;
            // untouched top-level fields are restored from the source
            sw.timestamp = w.timestamp.clone();
            sw.context_info = w.context_info.clone();
            sw.action_info = w.action_info.clone();
            sw.fill_notes = None;
            check_semantic(&sw, w).map_err(|e| format!("{INCONSISTENT}{e}"))?;
            Ok(sw)
        })
        .await;
    match completion {
        Ok(c) => Ok(SemanticWorkflow(c.value)),
        Err(LlmError::ContractViolation { reason, .. }) if reason.starts_with(INCONSISTENT) => {
            Err(GeneralizationError::Inconsistent(reason[INCONSISTENT.len()..].to_string()))
        }
        Err(source) => Err(GeneralizationError::Llm {
            stage: AdaptStage::Identifier,
            source,
        }),
    }
}

/// Placeholders from the ledger still present in names/prompts.
pub fn unfilled(w: &Workflow, ledger: &[SemanticVariable]) -> BTreeSet<String> {
    let names: BTreeSet<&str> = ledger.iter().map(|v| v.placeholder.as_str()).collect();
    w.nodes
        .iter()
        .flat_map(|n| {
            token_re()
                .find_iter(&n.name)
                .chain(token_re().find_iter(&n.prompt))
                .map(|m| m.as_str().to_string())
                .collect::<Vec<_>>()
        })
        .filter(|t| names.contains(t.as_str()))
        .collect()
}

fn check_filled(out: &Workflow, sw: &SemanticWorkflow) -> Result<(), String> {
    check_structure(sw.workflow(), out)?;
    let report = validate(out);
    if !report.is_executable() {
        return Err(format!(
            "filled workflow invalid: {}",
            report.errors.iter().map(|e| e.message.as_str()).collect::<Vec<_>>().join("; ")
        ));
    }
    let notes = out.fill_notes.as_deref().unwrap_or_default();
    let known: BTreeSet<&str> = sw.variables().iter().map(|v| v.placeholder.as_str()).collect();
    if let Some(orphan) = notes.iter().find(|n| !known.contains(n.placeholder.as_str())) {
        return Err(format!("fill note references unknown placeholder `{}`", orphan.placeholder));
    }
    let left_open: BTreeSet<&str> = notes
        .iter()
        .filter(|n| n.source == FillSource::UserInstruction)
        .map(|n| n.placeholder.as_str())
        .collect();
    let stray: Vec<String> = unfilled(out, sw.variables())
        .into_iter()
        .filter(|t| !left_open.contains(t.as_str()))
        .collect();
    if !stray.is_empty() {
        return Err(format!("{UNFILLED}{}", stray.join(",")));
    }
    Ok(())
}

const UNFILLED: &str = "unfilled: ";

pub async fn instantiate(
    gateway: &Gateway,
    sw: &SemanticWorkflow,
    user_text: &str,
    original: &Workflow,
) -> Result<Workflow, GeneralizationError> {
    let semantic = serde_json::to_string(sw.workflow()).expect("serializes");
    let current = serde_json::to_string(original).expect("serializes");
    let instruction = serde_json::to_string(user_text).expect("serializes");
    let system = prompts::FILLER.render(&[
        ("agent1_output", &semantic),
        ("user_text", &instruction),
        ("current_workflow", &current),
    ]);
    let payload = json!({
        "semantic_workflow": sw.workflow(),
        "user_instruction": user_text,
        "original_workflow": original,
    })
    .to_string();
    let request = gateway.request(system, payload);
    let completion = gateway
        .complete_checked(&request, JsonContract::FilledWorkflow, gateway.max_retries, |v: Value| {
            let mut out: Workflow = serde_json::from_value(v).map_err(|e| e.to_string())?;
            out.semantic_variables = None;
            if out.fill_notes.is_none() {
                out.fill_notes = Some(Vec::new());
            }
            check_filled(&out, sw)?;
            Ok(out)
        })
        .await;
    match completion {
        Ok(c) => Ok(c.value),
        Err(LlmError::ContractViolation { reason, .. }) if reason.starts_with(UNFILLED) => Err(
            GeneralizationError::Unfilled(reason[UNFILLED.len()..].split(',').map(str::to_string).collect()),
        ),
        Err(LlmError::ContractViolation { reason, .. }) => Err(GeneralizationError::Instantiation(reason)),
        Err(source) => Err(GeneralizationError::Llm {
            stage: AdaptStage::Filler,
            source,
        }),
    }
}

#[derive(Debug, Clone)]
pub struct Adaptation {
    pub workflow: Workflow,
    pub semantic: SemanticWorkflow,
    /// Human-readable remarks, e.g. that Steps sections were generalized.
    pub notes: Vec<String>,
}

pub async fn adapt(
    gateway: &Gateway,
    w: &Workflow,
    user_text: &str,
) -> Result<Adaptation, GeneralizationError> {
    let semantic = semanticize(gateway, w, user_text).await?;
    let workflow = instantiate(gateway, &semantic, user_text, w).await?;
    let mut notes = Vec::new();
    let generalized: Vec<&str> = w
        .nodes
        .iter()
        .zip(&workflow.nodes)
        .filter(|(a, b)| a.prompt.contains("Steps:") && step_text(&a.prompt) != step_text(&b.prompt))
        .map(|(_, b)| b.name.as_str())
        .collect();
    if !generalized.is_empty() {
        notes.push(format!(
            "Steps sections were generalized for: {}",
            generalized.join(", ")
        ));
    }
    Ok(Adaptation {
        workflow,
        semantic,
        notes,
    })
}

fn step_text(prompt: &str) -> Option<&str> {
    let start = prompt.find("Steps:")?;
    let end = prompt[start..].find("Contingency:").map(|i| start + i).unwrap_or(prompt.len());
    Some(&prompt[start..end])
}
