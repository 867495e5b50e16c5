//! Task-level workflow DAG: schema, validation and the edit algebra.

mod diff;
mod edit;
pub mod steps;
mod validate;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use diff::diff;
pub use edit::{apply_edit, Edge, EditError, WorkflowEdit};
pub use validate::{validate, ValidationReport, Violation, ViolationCode};

use crate::generalization::{FillNote, SemanticVariable};
use crate::generation::{ActionInfo, ContextInfo};

/// Capabilities a node may be granted.
pub const TOOL_VOCABULARY: [&str; 5] = [
    "browser.open",
    "browser.click",
    "browser.fill",
    "api.fetch",
    "browser.read",
];

pub fn is_known_tool(tool: &str) -> bool {
    TOOL_VOCABULARY.contains(&tool)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowNode {
    pub name: String,
    pub parent: Vec<String>,
    pub children: Vec<String>,
    pub tools: Vec<String>,
    pub prompt: String,
}

impl WorkflowNode {
    pub fn new(name: impl Into<String>, prompt: impl Into<String>) -> Self {
        WorkflowNode {
            name: name.into(),
            parent: Vec::new(),
            children: Vec::new(),
            tools: Vec::new(),
            prompt: prompt.into(),
        }
    }

    pub fn is_sink(&self) -> bool {
        self.children.is_empty()
    }

    pub fn is_root(&self) -> bool {
        self.parent.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workflow {
    pub timestamp: String,
    #[serde(default)]
    pub context_info: ContextInfo,
    #[serde(default)]
    pub action_info: ActionInfo,
    pub nodes: Vec<WorkflowNode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub semantic_variables: Option<Vec<SemanticVariable>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fill_notes: Option<Vec<FillNote>>,
}

impl Workflow {
    pub fn new(timestamp: impl Into<String>, nodes: Vec<WorkflowNode>) -> Self {
        Workflow {
            timestamp: timestamp.into(),
            context_info: ContextInfo::default(),
            action_info: ActionInfo::default(),
            nodes,
            semantic_variables: None,
            fill_notes: None,
        }
    }

    /// Builds a workflow from `(from, to)` edges, filling both edge lists.
    pub fn from_edges(names: &[&str], edges: &[(&str, &str)]) -> Self {
        let mut nodes: Vec<WorkflowNode> = names
            .iter()
            .map(|n| WorkflowNode::new(*n, format!("Purpose: {n}.")))
            .collect();
        for (from, to) in edges {
            if let Some(n) = nodes.iter_mut().find(|n| n.name == *from) {
                n.children.push(to.to_string());
            }
            if let Some(n) = nodes.iter_mut().find(|n| n.name == *to) {
                n.parent.push(from.to_string());
            }
        }
        Workflow::new("1970-01-01T00:00:00Z", nodes)
    }

    pub fn node(&self, name: &str) -> Option<&WorkflowNode> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn node_mut(&mut self, name: &str) -> Option<&mut WorkflowNode> {
        self.nodes.iter_mut().find(|n| n.name == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.node(name).is_some()
    }

    pub fn names(&self) -> BTreeSet<String> {
        self.nodes.iter().map(|n| n.name.clone()).collect()
    }

    /// Edge set, read from the children lists.
    pub fn edges(&self) -> BTreeSet<(String, String)> {
        self.nodes
            .iter()
            .flat_map(|n| n.children.iter().map(move |c| (n.name.clone(), c.clone())))
            .collect()
    }

    pub fn sinks(&self) -> Vec<&WorkflowNode> {
        self.nodes.iter().filter(|n| n.is_sink()).collect()
    }

    pub fn roots(&self) -> Vec<&WorkflowNode> {
        self.nodes.iter().filter(|n| n.is_root()).collect()
    }

    /// Every node reachable from `name` through children edges, excluding
    /// `name` itself.
    pub fn descendants(&self, name: &str) -> BTreeSet<String> {
        self.closure(name, |n| &n.children)
    }

    pub fn ancestors(&self, name: &str) -> BTreeSet<String> {
        self.closure(name, |n| &n.parent)
    }

    fn closure(&self, start: &str, next: impl Fn(&WorkflowNode) -> &Vec<String>) -> BTreeSet<String> {
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<&str> = VecDeque::from([start]);
        while let Some(current) = queue.pop_front() {
            if let Some(node) = self.node(current) {
                for n in next(node) {
                    if seen.insert(n.clone()) {
                        queue.push_back(n);
                    }
                }
            }
        }
        seen.remove(start);
        seen
    }

    /// Kahn order over children edges; `None` when the graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<String>> {
        let mut indegree: BTreeMap<&str, usize> =
            self.nodes.iter().map(|n| (n.name.as_str(), 0)).collect();
        for n in &self.nodes {
            for c in &n.children {
                if let Some(d) = indegree.get_mut(c.as_str()) {
                    *d += 1;
                }
            }
        }
        let mut ready: VecDeque<&str> = self
            .nodes
            .iter()
            .map(|n| n.name.as_str())
            .filter(|n| indegree[n] == 0)
            .collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(name) = ready.pop_front() {
            order.push(name.to_string());
            if let Some(node) = self.node(name) {
                for c in &node.children {
                    if let Some(d) = indegree.get_mut(c.as_str()) {
                        *d -= 1;
                        if *d == 0 {
                            ready.push_back(c.as_str());
                        }
                    }
                }
            }
        }
        (order.len() == self.nodes.len()).then_some(order)
    }

    /// Graph equality keyed by node name: same node set, same edge sets,
    /// same prompts and tools. List order is ignored.
    pub fn graph_eq(&self, other: &Workflow) -> bool {
        if self.names() != other.names() || self.nodes.len() != other.nodes.len() {
            return false;
        }
        self.nodes.iter().all(|a| {
            let Some(b) = other.node(&a.name) else {
                return false;
            };
            let set = |v: &Vec<String>| v.iter().cloned().collect::<BTreeSet<_>>();
            set(&a.parent) == set(&b.parent)
                && set(&a.children) == set(&b.children)
                && set(&a.tools) == set(&b.tools)
                && a.prompt == b.prompt
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("workflow serializes")
    }

    pub fn from_json(text: &str) -> Result<Workflow, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn content_hash(&self) -> String {
        Sha256::digest(self.to_json().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
