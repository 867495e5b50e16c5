use std::collections::BTreeSet;

use super::{Edge, Workflow, WorkflowEdit, WorkflowNode};

/// Edit script turning `old` into a workflow graph-equal (by name) to `new`.
///
/// Every intermediate state stays valid when both inputs are valid:
/// edges are cut first, then nodes are added in topological order of `new`,
/// then removed nodes are cascade-deleted, then missing edges are added and
/// finally prompts/tools are patched.
pub fn diff(old: &Workflow, new: &Workflow) -> Vec<WorkflowEdit> {
    let old_names = old.names();
    let new_names = new.names();
    let surviving: BTreeSet<&String> = old_names.intersection(&new_names).collect();
    let old_edges = old.edges();
    let new_edges = new.edges();
    let mut edits = Vec::new();

    // Cut edges that `new` lacks whenever they point into a surviving node,
    // so cascade deletion later cannot reach it.
    for (from, to) in old_edges.difference(&new_edges) {
        if surviving.contains(to) {
            edits.push(WorkflowEdit::Reconnect {
                remove: Some(Edge::new(from, to)),
                add: None,
            });
        }
    }

    let order = new
        .topological_order()
        .unwrap_or_else(|| new.nodes.iter().map(|n| n.name.clone()).collect());
    for name in order.iter().filter(|n| !old_names.contains(*n)) {
        let source = new.node(name).expect("name from new");
        let node = WorkflowNode {
            name: name.clone(),
            parent: source.parent.clone(),
            children: source
                .children
                .iter()
                .filter(|c| surviving.contains(c))
                .cloned()
                .collect(),
            tools: source.tools.clone(),
            prompt: source.prompt.clone(),
        };
        edits.push(WorkflowEdit::AddNode { node });
    }

    let mut gone = BTreeSet::new();
    for n in old.nodes.iter().filter(|n| !new_names.contains(&n.name)) {
        if gone.contains(&n.name) {
            continue;
        }
        // Descendants after the cut are exactly the removed nodes below `n`.
        gone.insert(n.name.clone());
        gone.extend(reachable_after_cut(old, &surviving, &n.name));
        edits.push(WorkflowEdit::DeleteSubtree {
            name: n.name.clone(),
        });
    }

    for (from, to) in new_edges.difference(&old_edges) {
        if surviving.contains(from) && surviving.contains(to) {
            edits.push(WorkflowEdit::Reconnect {
                remove: None,
                add: Some(Edge::new(from, to)),
            });
        }
    }

    for name in &surviving {
        let (a, b) = (old.node(name).unwrap(), new.node(name).unwrap());
        if a.prompt != b.prompt {
            edits.push(WorkflowEdit::SetPrompt {
                name: (*name).clone(),
                prompt: b.prompt.clone(),
            });
        }
        let set = |v: &Vec<String>| v.iter().cloned().collect::<BTreeSet<_>>();
        if set(&a.tools) != set(&b.tools) || a.tools.len() != b.tools.len() {
            edits.push(WorkflowEdit::SetTools {
                name: (*name).clone(),
                tools: b.tools.clone(),
            });
        }
    }
    edits
}

fn reachable_after_cut(old: &Workflow, surviving: &BTreeSet<&String>, start: &str) -> BTreeSet<String> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![start.to_string()];
    while let Some(cur) = stack.pop() {
        if let Some(node) = old.node(&cur) {
            for c in node.children.iter().filter(|c| !surviving.contains(c)) {
                if seen.insert(c.clone()) {
                    stack.push(c.clone());
                }
            }
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workflow::apply_edit;

    fn replay(base: &Workflow, edits: &[WorkflowEdit]) -> Workflow {
        edits
            .iter()
            .fold(base.clone(), |w, e| apply_edit(&w, e).expect("diff edits apply"))
    }

    #[test]
    fn identical_is_empty() {
        let w = Workflow::from_edges(&["A", "B"], &[("A", "B")]);
        assert!(diff(&w, &w).is_empty());
    }

    #[test]
    fn extra_sink_is_one_add() {
        let old = Workflow::from_edges(&["A", "B"], &[("A", "B")]);
        let new = Workflow::from_edges(&["A", "B", "C"], &[("A", "B"), ("B", "C")]);
        let edits = diff(&old, &new);
        assert_eq!(edits.len(), 1);
        assert!(matches!(&edits[0], WorkflowEdit::AddNode { node } if node.name == "C"));
        assert!(replay(&old, &edits).graph_eq(&new));
    }

    #[test]
    fn prompt_change_is_one_set_prompt() {
        let old = Workflow::from_edges(&["A", "B"], &[("A", "B")]);
        let mut new = old.clone();
        new.nodes[1].prompt = "Purpose: other.".into();
        let edits = diff(&old, &new);
        assert_eq!(
            edits,
            vec![WorkflowEdit::SetPrompt { name: "B".into(), prompt: "Purpose: other.".into() }]
        );
    }

    #[test]
    fn reversed_edges_and_rename() {
        let old = Workflow::from_edges(&["A", "B", "C"], &[("A", "B"), ("B", "C")]);
        let new = Workflow::from_edges(&["C", "B", "X"], &[("C", "B"), ("B", "X")]);
        let edits = diff(&old, &new);
        assert!(replay(&old, &edits).graph_eq(&new));
    }

    #[test]
    fn removed_middle_keeps_surviving_descendants() {
        let old = Workflow::from_edges(&["A", "B", "C"], &[("A", "B"), ("B", "C")]);
        let new = Workflow::from_edges(&["A", "C"], &[("A", "C")]);
        let edits = diff(&old, &new);
        assert!(replay(&old, &edits).graph_eq(&new));
    }
}
