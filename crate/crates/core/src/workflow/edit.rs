use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{validate, ValidationReport, Workflow, WorkflowNode};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
}

impl Edge {
    pub fn new(from: impl Into<String>, to: impl Into<String>) -> Self {
        Edge {
            from: from.into(),
            to: to.into(),
        }
    }
}

/// Direct-manipulation edit. Renaming is delete + add.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WorkflowEdit {
    /// Inserts `node`, mirroring its declared `parent`/`children` onto the
    /// referenced nodes.
    AddNode { node: WorkflowNode },
    /// Removes the node and every descendant.
    DeleteSubtree { name: String },
    /// Removes one edge and adds another in a single step. Either half may
    /// be omitted, not both.
    Reconnect {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        remove: Option<Edge>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        add: Option<Edge>,
    },
    SetPrompt { name: String, prompt: String },
    SetTools { name: String, tools: Vec<String> },
}

#[derive(Debug, Error)]
pub enum EditError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("node `{0}` already exists")]
    DuplicateNode(String),
    #[error("edge {}->{} does not exist", .0.from, .0.to)]
    MissingEdge(Edge),
    #[error("invalid edit: {0}")]
    Invalid(String),
    #[error("base workflow is not valid")]
    InvalidBase(ValidationReport),
    #[error("edit rejected: {} validation error(s)", .0.errors.len())]
    Rejected(ValidationReport),
}

impl EditError {
    pub fn report(&self) -> Option<&ValidationReport> {
        match self {
            EditError::InvalidBase(r) | EditError::Rejected(r) => Some(r),
            _ => None,
        }
    }
}

fn require<'a>(w: &'a Workflow, name: &str) -> Result<&'a WorkflowNode, EditError> {
    w.node(name).ok_or_else(|| EditError::UnknownNode(name.to_string()))
}

fn push_unique(list: &mut Vec<String>, name: &str) {
    if !list.iter().any(|n| n == name) {
        list.push(name.to_string());
    }
}

fn dedup(list: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(list.len());
    for n in list {
        push_unique(&mut out, n);
    }
    out
}

/// Applies `edit` transactionally: the result must validate with no errors,
/// otherwise the edit is rejected and `w` is left as it was.
pub fn apply_edit(w: &Workflow, edit: &WorkflowEdit) -> Result<Workflow, EditError> {
    let base = validate(w);
    if !base.is_executable() {
        return Err(EditError::InvalidBase(base));
    }
    let mut next = w.clone();
    match edit {
        WorkflowEdit::AddNode { node } => {
            if w.contains(&node.name) {
                return Err(EditError::DuplicateNode(node.name.clone()));
            }
            for other in node.parent.iter().chain(&node.children) {
                require(w, other)?;
            }
            let node = WorkflowNode {
                parent: dedup(&node.parent),
                children: dedup(&node.children),
                tools: dedup(&node.tools),
                ..node.clone()
            };
            for p in &node.parent {
                push_unique(&mut next.node_mut(p).expect("checked").children, &node.name);
            }
            for c in &node.children {
                push_unique(&mut next.node_mut(c).expect("checked").parent, &node.name);
            }
            next.nodes.push(node);
        }
        WorkflowEdit::DeleteSubtree { name } => {
            require(w, name)?;
            let mut doomed = w.descendants(name);
            doomed.insert(name.clone());
            next.nodes.retain(|n| !doomed.contains(&n.name));
            for n in &mut next.nodes {
                n.parent.retain(|p| !doomed.contains(p));
                n.children.retain(|c| !doomed.contains(c));
            }
        }
        WorkflowEdit::Reconnect { remove, add } => {
            if remove.is_none() && add.is_none() {
                return Err(EditError::Invalid("reconnect needs an edge to remove or add".into()));
            }
            for e in remove.iter().chain(add.iter()) {
                require(w, &e.from)?;
                require(w, &e.to)?;
                if e.from == e.to {
                    return Err(EditError::Invalid(format!("self edge on `{}`", e.from)));
                }
            }
            if let Some(e) = remove {
                if !w.edges().contains(&(e.from.clone(), e.to.clone())) {
                    return Err(EditError::MissingEdge(e.clone()));
                }
                next.node_mut(&e.from).expect("checked").children.retain(|c| c != &e.to);
                next.node_mut(&e.to).expect("checked").parent.retain(|p| p != &e.from);
            }
            if let Some(e) = add {
                push_unique(&mut next.node_mut(&e.from).expect("checked").children, &e.to);
                push_unique(&mut next.node_mut(&e.to).expect("checked").parent, &e.from);
            }
        }
        WorkflowEdit::SetPrompt { name, prompt } => {
            require(w, name)?;
            next.node_mut(name).expect("checked").prompt = prompt.clone();
        }
        WorkflowEdit::SetTools { name, tools } => {
            require(w, name)?;
            next.node_mut(name).expect("checked").tools = dedup(tools);
        }
    }
    let report = validate(&next);
    if report.is_executable() {
        Ok(next)
    } else {
        Err(EditError::Rejected(report))
    }
}
