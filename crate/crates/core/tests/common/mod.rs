#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::{Path, PathBuf};

use demoflow_core::workflow::{Workflow, WorkflowNode};
use rand::seq::SliceRandom;
use rand::Rng;
use regex::Regex;

pub const VOCABULARY: [&str; 5] = ["browser.open", "browser.click", "browser.fill", "browser.read", "api.fetch"];

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn read_fixture(rel: &str) -> String {
    std::fs::read_to_string(fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn load_workflow(rel: &str) -> Workflow {
    Workflow::from_json(&read_fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

/// The 20 corpus workflows, sorted by file name.
pub fn corpus() -> Vec<(String, Workflow)> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(fixture("workflows/corpus"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let name = p.file_stem().unwrap().to_string_lossy().into_owned();
            let w = Workflow::from_json(&std::fs::read_to_string(&p).unwrap()).unwrap();
            (name, w)
        })
        .collect()
}

/// Random DAG with `1..=max_nodes` nodes; node order in the vector is
/// shuffled so it carries no topological hint.
pub fn random_dag(rng: &mut impl Rng, max_nodes: usize, edge_p: f64) -> Workflow {
    let n = rng.random_range(1..=max_nodes);
    let names: Vec<String> = (0..n).map(|i| format!("N{i}")).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(edge_p) {
                edges.push((names[i].clone(), names[j].clone()));
            }
        }
    }
    let mut nodes: Vec<WorkflowNode> = names
        .iter()
        .map(|name| {
            let mut node = WorkflowNode::new(name.clone(), format!("Purpose: {name}."));
            node.parent = edges.iter().filter(|(_, b)| b == name).map(|(a, _)| a.clone()).collect();
            node.children = edges.iter().filter(|(a, _)| a == name).map(|(_, b)| b.clone()).collect();
            node
        })
        .collect();
    nodes.shuffle(rng);
    Workflow::new("2025-01-01T00:00:00Z", nodes)
}

/// level(n) = 1 + max(level(parents)), roots at 1, by plain recursion.
pub fn recursive_levels(w: &Workflow) -> BTreeMap<String, usize> {
    fn level(w: &Workflow, name: &str, memo: &mut BTreeMap<String, usize>) -> usize {
        if let Some(l) = memo.get(name) {
            return *l;
        }
        let node = w.nodes.iter().find(|n| n.name == name).unwrap();
        let l = 1 + node.parent.iter().map(|p| level(w, p, memo)).max().unwrap_or(0);
        memo.insert(name.to_string(), l);
        l
    }
    let mut memo = BTreeMap::new();
    for n in &w.nodes {
        level(w, &n.name, &mut memo);
    }
    memo
}

/// Groups oracle levels into sorted name lists, level 1 first.
pub fn oracle_plan(w: &Workflow) -> Vec<Vec<String>> {
    let levels = recursive_levels(w);
    let depth = levels.values().copied().max().unwrap_or(0);
    (1..=depth)
        .map(|d| {
            let mut names: Vec<String> = levels.iter().filter(|(_, l)| **l == d).map(|(n, _)| n.clone()).collect();
            names.sort();
            names
        })
        .collect()
}

/// Nodes reachable from `start` along child edges, excluding `start`.
pub fn reachable(w: &Workflow, start: &str) -> BTreeSet<String> {
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([start.to_string()]);
    while let Some(n) = queue.pop_front() {
        if let Some(node) = w.nodes.iter().find(|x| x.name == n) {
            for c in &node.children {
                if seen.insert(c.clone()) {
                    queue.push_back(c.clone());
                }
            }
        }
    }
    seen.remove(start);
    seen
}

/// Depth-first cycle check over child lists.
pub fn has_cycle(w: &Workflow) -> bool {
    fn visit(w: &Workflow, n: &str, state: &mut BTreeMap<String, u8>) -> bool {
        match state.get(n) {
            Some(1) => return true,
            Some(2) => return false,
            _ => {}
        }
        state.insert(n.to_string(), 1);
        if let Some(node) = w.nodes.iter().find(|x| x.name == n) {
            for c in &node.children {
                if visit(w, c, state) {
                    return true;
                }
            }
        }
        state.insert(n.to_string(), 2);
        false
    }
    let mut state = BTreeMap::new();
    w.nodes.iter().any(|n| visit(w, &n.name, &mut state))
}

/// Prompt text with the Steps section cut out (up to Contingency or the end).
pub fn outside_steps(prompt: &str) -> String {
    let re = Regex::new(r"(?s)Steps:.*?(Contingency:|$)").unwrap();
    re.replace(prompt, "$1").into_owned()
}

pub fn placeholder_tokens(text: &str) -> BTreeSet<String> {
    Regex::new(r"\b[A-Z][A-Z0-9_]{3,}\b")
        .unwrap()
        .find_iter(text)
        .map(|m| m.as_str().to_string())
        .collect()
}

pub fn workflow_placeholder_tokens(w: &Workflow) -> BTreeSet<String> {
    w.nodes
        .iter()
        .flat_map(|n| placeholder_tokens(&n.name).into_iter().chain(placeholder_tokens(&n.prompt)))
        .collect()
}
