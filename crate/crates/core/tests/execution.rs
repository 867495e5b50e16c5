mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use demoflow_core::execution::bundle::{export_bundle, import_bundle, BundleError};
use demoflow_core::execution::session::{Session, SessionStore};
use demoflow_core::execution::{
    AgentError, AgentOutcome, ExecEvent, ExecutionError, Executor, Limits, NodeAgent, NodeState, NodeStatus,
    NodeTask, ScriptedAgent, SimulatedDriver, ToolBox,
};
use demoflow_core::workflow::Workflow;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

use common::*;

/// Succeeds with its node name unless the node is listed as failing;
/// remembers which ancestors every node saw.
#[derive(Default)]
struct Probe {
    failing: BTreeSet<String>,
    seen: Mutex<BTreeMap<String, Vec<String>>>,
    delay: Duration,
}

#[async_trait]
impl NodeAgent for Probe {
    async fn run(&self, task: &NodeTask, _tools: &mut ToolBox) -> Result<AgentOutcome, AgentError> {
        self.seen.lock().unwrap().insert(
            task.node.name.clone(),
            task.ancestors.iter().map(|r| r.node_name.clone()).collect(),
        );
        if !self.delay.is_zero() {
            tokio::time::sleep(self.delay).await;
        }
        if self.failing.contains(&task.node.name) {
            return Err(AgentError::Other(format!("{} broke", task.node.name)));
        }
        Ok(AgentOutcome {
            output: format!("done {}", task.node.name),
            final_url: None,
        })
    }
}

struct Panicky;

#[async_trait]
impl NodeAgent for Panicky {
    async fn run(&self, task: &NodeTask, _tools: &mut ToolBox) -> Result<AgentOutcome, AgentError> {
        if task.node.name == "B" {
            panic!("agent bug");
        }
        Ok(AgentOutcome {
            output: task.node.name.clone(),
            final_url: None,
        })
    }
}

fn bench_driver() -> SimulatedDriver {
    SimulatedDriver::from_path(&fixture("sites/bench.json")).unwrap()
}

fn rt() -> tokio::runtime::Runtime {
    tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn parents_finish_before_children_start_and_each_node_runs_once(seed in any::<u64>()) {
        let w = random_dag(&mut StdRng::seed_from_u64(seed), 8, 0.35);
        let probe = Arc::new(Probe { delay: Duration::from_millis(2), ..Default::default() });
        let session = Session::in_memory("s").unwrap();
        let exec = Executor::new(Arc::new(bench_driver()), probe.clone());
        let r = rt().block_on(exec.execute(&w, &session, "e")).unwrap();
        prop_assert_eq!(r.results.len(), w.nodes.len());
        for n in &w.nodes {
            for p in &n.parent {
                prop_assert!(r.results[p].finished <= r.results[&n.name].started);
            }
        }
        let history = session.store.history("s").unwrap();
        let names: Vec<&str> = history.iter().map(|h| h.result.node_name.as_str()).collect();
        let unique: BTreeSet<&str> = names.iter().copied().collect();
        prop_assert_eq!(names.len(), unique.len());
        prop_assert_eq!(session.store.replay("s", "e").unwrap(), r.results.clone());
        let seen = probe.seen.lock().unwrap();
        for n in &w.nodes {
            let expected = w.ancestors(&n.name);
            let got: BTreeSet<String> = seen[&n.name].iter().cloned().collect();
            prop_assert_eq!(got, expected);
        }
    }

    #[test]
    fn failures_skip_exactly_their_descendants(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let w = random_dag(&mut StdRng::seed_from_u64(seed), 8, 0.35);
        let victim = w.nodes[pick.index(w.nodes.len())].name.clone();
        let probe = Arc::new(Probe { failing: BTreeSet::from([victim.clone()]), ..Default::default() });
        let exec = Executor::new(Arc::new(bench_driver()), probe);
        let r = rt().block_on(exec.execute(&w, &Session::in_memory("s").unwrap(), "e")).unwrap();
        let skipped: BTreeSet<String> = r.with_status(NodeStatus::Skipped).into_iter().map(String::from).collect();
        prop_assert_eq!(r.with_status(NodeStatus::Failed), vec![victim.as_str()]);
        prop_assert_eq!(&skipped, &reachable(&w, &victim));
        prop_assert_eq!(r.with_status(NodeStatus::Succeeded).len(), w.nodes.len() - 1 - skipped.len());
        for s in &skipped {
            prop_assert!(r.results[s].output.contains("failed"));
        }
    }
}

#[tokio::test]
async fn panicking_agent_fails_only_its_branch() {
    let w = Workflow::from_edges(&["A", "B", "C", "D"], &[("A", "B"), ("A", "C"), ("B", "D")]);
    let exec = Executor::new(Arc::new(bench_driver()), Arc::new(Panicky));
    let r = exec.execute(&w, &Session::in_memory("s").unwrap(), "e").await.unwrap();
    assert_eq!(r.results["B"].status, NodeStatus::Failed);
    assert!(r.results["B"].output.contains("panicked"));
    assert_eq!(r.results["C"].status, NodeStatus::Succeeded);
    assert_eq!(r.results["D"].status, NodeStatus::Skipped);
    assert!(!r.warnings.is_empty(), "two sinks should warn");
}

#[tokio::test]
async fn slow_nodes_time_out() {
    let w = Workflow::from_edges(&["A"], &[]);
    let probe = Arc::new(Probe { delay: Duration::from_millis(300), ..Default::default() });
    let exec = Executor::new(Arc::new(bench_driver()), probe).with_limits(Limits {
        max_actions: 5,
        node_timeout: Duration::from_millis(50),
    });
    let r = exec.execute(&w, &Session::in_memory("s").unwrap(), "e").await.unwrap();
    assert_eq!(r.results["A"].status, NodeStatus::Failed);
    assert!(r.results["A"].output.contains("timed out"));
}

#[tokio::test]
async fn action_budget_and_tool_grants_are_enforced() {
    let mut w = load_workflow("workflows/chain4.json");
    w.nodes[1].tools = vec!["browser.read".into()];
    let exec = Executor::new(Arc::new(bench_driver()), Arc::new(ScriptedAgent)).with_limits(Limits {
        max_actions: 1,
        node_timeout: Duration::from_secs(5),
    });
    let r = exec.execute(&w, &Session::in_memory("s").unwrap(), "e").await.unwrap();
    let a = &r.results["A"];
    assert_eq!(a.status, NodeStatus::Failed, "open + read exceeds a budget of 1");
    assert!(a.output.contains("budget"));
    assert_eq!(a.actions_taken.iter().filter(|x| x.ok).count(), 1);

    let exec = Executor::new(Arc::new(bench_driver()), Arc::new(ScriptedAgent));
    let r = exec.execute(&w, &Session::in_memory("s").unwrap(), "e").await.unwrap();
    assert_eq!(r.results["A"].status, NodeStatus::Succeeded);
    let b = &r.results["B"];
    assert_eq!(b.status, NodeStatus::Failed);
    assert!(b.output.contains("permission"));
    assert!(!b.actions_taken[0].ok);
    assert_eq!(r.with_status(NodeStatus::Skipped), vec!["C", "D"]);
}

#[tokio::test]
async fn disconnect_aborts_with_partial_results() {
    let w = load_workflow("workflows/chain4.json");
    let events = Arc::new(Mutex::new(Vec::new()));
    let sink = events.clone();
    let driver = bench_driver().disconnect_after(2);
    let exec = Executor::new(Arc::new(driver), Arc::new(ScriptedAgent))
        .with_observer(move |e| sink.lock().unwrap().push(e));
    let err = exec.execute(&w, &Session::in_memory("s").unwrap(), "e").await.unwrap_err();
    let ExecutionError::Aborted { partial, .. } = err else {
        panic!("expected abort, got {err}");
    };
    assert_eq!(partial.results["A"].status, NodeStatus::Succeeded);
    assert_eq!(partial.results["B"].status, NodeStatus::Failed);
    assert!(!partial.results.contains_key("C"));
    let events = events.lock().unwrap();
    assert!(matches!(events.last(), Some(ExecEvent::Finished { aborted: Some(_), .. })));
}

#[tokio::test]
async fn status_events_follow_the_lifecycle() {
    let w = load_workflow("workflows/diamond.json");
    let events = Arc::new(Mutex::new(Vec::new()));
    let sink = events.clone();
    let exec = Executor::new(Arc::new(bench_driver()), Arc::new(ScriptedAgent))
        .with_observer(move |e| sink.lock().unwrap().push(e));
    let r = exec.execute(&w, &Session::in_memory("s").unwrap(), "e").await.unwrap();
    let events = events.lock().unwrap();
    for name in ["A", "B", "C", "D"] {
        let states: Vec<NodeState> = events
            .iter()
            .filter_map(|e| match e {
                ExecEvent::NodeStatus { node, state, .. } if node == name => Some(*state),
                _ => None,
            })
            .collect();
        assert_eq!(states, vec![NodeState::Pending, NodeState::Running, NodeState::Succeeded], "{name}");
    }
    match events.last() {
        Some(ExecEvent::Finished { final_output, aborted: None, .. }) => {
            assert_eq!(final_output, &r.final_output);
            assert!(final_output.contains("D page content"));
        }
        other => panic!("unexpected last event {other:?}"),
    }
    let json = serde_json::to_value(&events[0]).unwrap();
    assert_eq!(json["type"], "node_status");
    assert_eq!(json["state"], "pending");
}

#[tokio::test]
async fn history_survives_a_new_store_handle() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("history.db");
    let w = load_workflow("workflows/diamond.json");
    let session = Session::new("s1", Arc::new(SessionStore::open(&path).unwrap()));
    let exec = Executor::new(Arc::new(bench_driver()), Arc::new(ScriptedAgent));
    let r = exec.execute(&w, &session, "run-1").await.unwrap();
    drop(session);
    let reopened = SessionStore::open(&path).unwrap();
    assert_eq!(reopened.replay("s1", "run-1").unwrap(), r.results);
    assert!(reopened.replay("s1", "run-2").unwrap().is_empty());
}

fn rezip(entries: &[(&str, String)]) -> Vec<u8> {
    use std::io::Write;
    let mut zip = zip::ZipWriter::new(std::io::Cursor::new(Vec::new()));
    for (name, body) in entries {
        zip.start_file(*name, zip::write::SimpleFileOptions::default()).unwrap();
        zip.write_all(body.as_bytes()).unwrap();
    }
    zip.finish().unwrap().into_inner()
}

#[test]
fn tampered_bundles_are_refused() {
    let w = load_workflow("workflows/seven.json");
    let imported = import_bundle(&export_bundle(&w).unwrap()).unwrap();
    assert_eq!(imported.manifest.plan.levels.len(), 4);
    assert!(imported.manifest.tools_used.contains(&"browser.open".to_string()));
    let manifest = serde_json::to_string(&imported.manifest).unwrap();

    let mut other = w.clone();
    other.nodes.retain(|n| n.name != "Right");
    for n in &mut other.nodes {
        n.parent.retain(|p| p != "Right");
        n.children.retain(|c| c != "Right");
    }
    let swapped = rezip(&[("workflow.json", other.to_json()), ("manifest.json", manifest.clone())]);
    assert!(matches!(import_bundle(&swapped), Err(BundleError::PlanMismatch)));

    let future = manifest.replace("\"format_version\":\"1\"", "\"format_version\":\"9\"");
    let bumped = rezip(&[("workflow.json", w.to_json()), ("manifest.json", future)]);
    assert!(matches!(import_bundle(&bumped), Err(BundleError::Version(v)) if v == "9"));

    assert!(matches!(import_bundle(b"not a zip"), Err(BundleError::Zip(_))));
}
