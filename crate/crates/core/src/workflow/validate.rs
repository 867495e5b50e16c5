use std::collections::{BTreeMap, BTreeSet};

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use super::{is_known_tool, Workflow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationCode {
    EmptyWorkflow,
    EmptyName,
    DuplicateName,
    DanglingEdge,
    DuplicateEdge,
    AsymmetricEdge,
    UnknownTool,
    Cycle,
    NoRoot,
    NoSink,
    MultipleSinks,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub nodes: Vec<String>,
    pub message: String,
}

impl Violation {
    fn new(code: ViolationCode, nodes: Vec<String>, message: impl Into<String>) -> Self {
        Violation {
            code,
            nodes,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<Violation>,
    pub warnings: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_executable(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn has_error(&self, code: ViolationCode) -> bool {
        self.errors.iter().any(|v| v.code == code)
    }

    pub fn has_warning(&self, code: ViolationCode) -> bool {
        self.warnings.iter().any(|v| v.code == code)
    }
}

/// Structural checks. Problems are reported, never raised.
pub fn validate(w: &Workflow) -> ValidationReport {
    let mut report = ValidationReport::default();
    let err = |r: &mut ValidationReport, code, nodes, msg: String| {
        r.errors.push(Violation::new(code, nodes, msg))
    };

    if w.nodes.is_empty() {
        err(&mut report, ViolationCode::EmptyWorkflow, vec![], "workflow has no nodes".into());
        return report;
    }

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for n in &w.nodes {
        *counts.entry(n.name.as_str()).or_default() += 1;
    }
    if counts.contains_key("") {
        err(&mut report, ViolationCode::EmptyName, vec![], "node with empty name".into());
    }
    for (name, c) in &counts {
        if *c > 1 && !name.is_empty() {
            err(
                &mut report,
                ViolationCode::DuplicateName,
                vec![name.to_string()],
                format!("name `{name}` used by {c} nodes"),
            );
        }
    }

    for n in &w.nodes {
        for (list, label) in [(&n.parent, "parent"), (&n.children, "children")] {
            let mut seen = BTreeSet::new();
            for other in list {
                if !seen.insert(other) {
                    err(
                        &mut report,
                        ViolationCode::DuplicateEdge,
                        vec![n.name.clone(), other.clone()],
                        format!("`{}` lists `{other}` twice in {label}", n.name),
                    );
                }
                match w.node(other) {
                    None => err(
                        &mut report,
                        ViolationCode::DanglingEdge,
                        vec![n.name.clone(), other.clone()],
                        format!("`{}` {label} references missing node `{other}`", n.name),
                    ),
                    Some(o) => {
                        let back = if label == "parent" { &o.children } else { &o.parent };
                        if !back.contains(&n.name) {
                            err(
                                &mut report,
                                ViolationCode::AsymmetricEdge,
                                vec![n.name.clone(), other.clone()],
                                format!(
                                    "`{}` lists `{other}` in {label} but not vice versa",
                                    n.name
                                ),
                            );
                        }
                    }
                }
            }
        }
        for tool in n.tools.iter().filter(|t| !is_known_tool(t)) {
            err(
                &mut report,
                ViolationCode::UnknownTool,
                vec![n.name.clone()],
                format!("`{}` uses unknown tool `{tool}`", n.name),
            );
        }
    }

    // Tarjan over the union of both edge directions; any SCC with more than
    // one member (or a self loop) is a cycle.
    let mut graph = DiGraph::<&str, ()>::new();
    let mut index = BTreeMap::new();
    for n in &w.nodes {
        index
            .entry(n.name.as_str())
            .or_insert_with(|| graph.add_node(n.name.as_str()));
    }
    let mut self_loops = BTreeSet::new();
    for n in &w.nodes {
        let children = n.children.iter().map(|c| (n.name.as_str(), c.as_str()));
        let parents = n.parent.iter().map(|p| (p.as_str(), n.name.as_str()));
        for (a, b) in children.chain(parents) {
            if let (Some(&ia), Some(&ib)) = (index.get(a), index.get(b)) {
                if ia == ib {
                    self_loops.insert(a.to_string());
                }
                graph.update_edge(ia, ib, ());
            }
        }
    }
    for scc in tarjan_scc(&graph) {
        let mut members: Vec<String> = scc.iter().map(|i| graph[*i].to_string()).collect();
        members.sort();
        if members.len() > 1 || members.iter().any(|m| self_loops.contains(m)) {
            let msg = format!("cycle through {}", members.join(", "));
            err(&mut report, ViolationCode::Cycle, members, msg);
        }
    }

    if w.roots().is_empty() {
        err(&mut report, ViolationCode::NoRoot, vec![], "no node without parents".into());
    }
    let sinks: Vec<String> = w.sinks().iter().map(|n| n.name.clone()).collect();
    match sinks.len() {
        0 => report.warnings.push(Violation::new(
            ViolationCode::NoSink,
            vec![],
            "no node without children",
        )),
        1 => {}
        k => report.warnings.push(Violation::new(
            ViolationCode::MultipleSinks,
            sinks,
            format!("{k} nodes have no children"),
        )),
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workflow::WorkflowNode;

    #[test]
    fn two_node_cycle_is_named() {
        let w = Workflow::from_edges(&["A", "B"], &[("A", "B"), ("B", "A")]);
        let r = validate(&w);
        let cycle = r.errors.iter().find(|v| v.code == ViolationCode::Cycle).unwrap();
        assert_eq!(cycle.nodes, vec!["A".to_string(), "B".to_string()]);
    }

    #[test]
    fn self_loop_is_a_cycle() {
        let w = Workflow::from_edges(&["A", "B"], &[("A", "B"), ("B", "B")]);
        assert!(validate(&w).has_error(ViolationCode::Cycle));
    }

    #[test]
    fn dangling_child_from_appendix_node() {
        let mut node = WorkflowNode::new("SearchFlights", "Purpose: search flights on kayak.com.");
        node.children = vec!["SelectFlight".into()];
        node.tools = vec!["browser.open".into(), "browser.fill".into(), "browser.click".into()];
        let r = validate(&Workflow::new("t", vec![node]));
        assert!(r.has_error(ViolationCode::DanglingEdge));
        assert!(!r.has_error(ViolationCode::UnknownTool));
    }

    #[test]
    fn duplicate_names_asymmetry_and_unknown_tools() {
        let mut a = WorkflowNode::new("A", "p");
        a.children = vec!["B".into()];
        a.tools = vec!["shell.exec".into()];
        let b = WorkflowNode::new("B", "p");
        let b2 = WorkflowNode::new("B", "p");
        let r = validate(&Workflow::new("t", vec![a, b, b2]));
        assert!(r.has_error(ViolationCode::DuplicateName));
        assert!(r.has_error(ViolationCode::AsymmetricEdge));
        assert!(r.has_error(ViolationCode::UnknownTool));
    }

    #[test]
    fn multiple_sinks_warn_only() {
        let w = Workflow::from_edges(&["A", "B", "C"], &[("A", "B"), ("A", "C")]);
        let r = validate(&w);
        assert!(r.is_executable());
        assert!(r.has_warning(ViolationCode::MultipleSinks));
    }

    #[test]
    fn empty_workflow_is_not_executable() {
        assert!(validate(&Workflow::new("t", vec![])).has_error(ViolationCode::EmptyWorkflow));
    }
}
