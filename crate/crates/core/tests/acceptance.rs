//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::panic::AssertUnwindSafe;
use std::sync::Arc;
use std::time::{Duration, Instant};

use demoflow_core::capture::{capture_log, debounce_inputs, parse_jsonl, render_log, validate_event, EventKind, RawEvent};
use demoflow_core::execution::bundle::{export_bundle, import_bundle};
use demoflow_core::execution::session::Session;
use demoflow_core::execution::{plan, Executor, NodeStatus, ScriptedAgent, SimulatedDriver};
use demoflow_core::generalization::{instantiate, semanticize};
use demoflow_core::generation::generate;
use demoflow_core::llm::{BackendError, Gateway, JsonContract, LlmError, ScriptedBackend};
use demoflow_core::workflow::{apply_edit, validate, Edge, Workflow, WorkflowEdit, WorkflowNode};
use futures::FutureExt;
use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};

use common::*;

type Outcome = Result<String, String>;

fn check(cond: bool, why: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(why())
    }
}

fn p1() -> Outcome {
    let mut rng = StdRng::seed_from_u64(1);
    let started = Instant::now();
    let mut agree = 0;
    for i in 0..1000 {
        let w = random_dag(&mut rng, 10, 0.3);
        let got = plan(&w).map_err(|e| format!("dag {i}: {e}"))?;
        if got.levels == oracle_plan(&w) {
            agree += 1;
        }
    }
    let elapsed = started.elapsed();
    check(agree == 1000, || format!("{agree}/1000 plans agree with the recursion oracle"))?;
    check(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("1000/1000 agree in {elapsed:.2?}"))
}

async fn timed_run(rel: &str) -> Result<(Duration, demoflow_core::execution::ExecutionResult), String> {
    let w = load_workflow(rel);
    let driver = SimulatedDriver::from_path(&fixture("sites/bench.json"))
        .map_err(|e| e.to_string())?
        .with_latency(Duration::from_millis(100));
    let exec = Executor::new(Arc::new(driver), Arc::new(ScriptedAgent));
    let session = Session::in_memory("p2").map_err(|e| e.to_string())?;
    let started = Instant::now();
    let result = exec.execute(&w, &session, "run").await.map_err(|e| e.to_string())?;
    Ok((started.elapsed(), result))
}

async fn p2() -> Outcome {
    let (diamond, r) = timed_run("workflows/diamond.json").await?;
    check(r.results.values().all(|n| n.status == NodeStatus::Succeeded), || {
        "diamond node failed".into()
    })?;
    let ms = diamond.as_secs_f64() * 1000.0;
    check((240.0..=360.0).contains(&ms), || format!("diamond took {ms:.0} ms, want 300 ± 20%"))?;
    let (b, c) = (&r.results["B"], &r.results["C"]);
    check(b.started < c.finished && c.started < b.finished, || {
        "B and C did not overlap".into()
    })?;
    let (chain, r) = timed_run("workflows/chain4.json").await?;
    check(r.results.values().all(|n| n.status == NodeStatus::Succeeded), || {
        "chain node failed".into()
    })?;
    let cms = chain.as_secs_f64() * 1000.0;
    check((320.0..=480.0).contains(&cms), || format!("chain took {cms:.0} ms, want 400 ± 20%"))?;
    Ok(format!("diamond {ms:.0} ms with B/C overlap, chain-of-4 {cms:.0} ms"))
}

async fn p3() -> Outcome {
    let raw = parse_jsonl(&read_fixture("logs/kayak.jsonl")).map_err(|e| e.to_string())?;
    let log = capture_log("p3", &raw).map_err(|e| e.to_string())?;
    let gw = Gateway::mock();
    let mut runs = Vec::new();
    for _ in 0..5 {
        runs.push(generate(&gw, &log).await.map_err(|e| e.to_string())?.to_json());
    }
    check(runs.iter().all(|r| r == &runs[0]), || "output differs between runs".into())?;
    let w = Workflow::from_json(&runs[0]).map_err(|e| e.to_string())?;
    for v in ["New York", "San Francisco", "2025-09-01"] {
        check(w.context_info.values.iter().any(|x| x == v), || format!("context_info.values lacks {v}"))?;
    }
    let sinks: Vec<_> = w.nodes.iter().filter(|n| n.children.is_empty()).collect();
    check(sinks.len() == 1, || format!("{} sink nodes", sinks.len()))?;
    for n in &w.nodes {
        for t in &n.tools {
            check(VOCABULARY.contains(&t.as_str()), || format!("{} uses unknown tool {t}", n.name))?;
        }
    }
    Ok(format!("{} nodes, one sink, byte-stable over 5 runs", w.nodes.len()))
}

async fn p4() -> Outcome {
    let gw = Gateway::mock();
    let corpus = corpus();
    check(corpus.len() == 20, || format!("{} corpus workflows", corpus.len()))?;
    let instruction = "keep the original values";
    for (name, w) in &corpus {
        let sw = semanticize(&gw, w, instruction).await.map_err(|e| format!("{name}: {e}"))?;
        let ledger: BTreeSet<String> = sw.variables().iter().map(|v| v.placeholder.clone()).collect();
        check(ledger.len() == sw.variables().len(), || format!("{name}: duplicate ledger entries"))?;
        let introduced: BTreeSet<String> = workflow_placeholder_tokens(sw.workflow())
            .difference(&workflow_placeholder_tokens(w))
            .cloned()
            .collect();
        check(introduced == ledger, || {
            format!("{name}: tokens {introduced:?} vs ledger {ledger:?}")
        })?;
        check(!ledger.is_empty(), || format!("{name}: nothing was abstracted"))?;
        let back = instantiate(&gw, &sw, instruction, w).await.map_err(|e| format!("{name}: {e}"))?;
        let names = |w: &Workflow| w.nodes.iter().map(|n| n.name.clone()).collect::<Vec<_>>();
        check(names(&back) == names(w), || format!("{name}: node names differ"))?;
        check(back.edges() == w.edges(), || format!("{name}: edges differ"))?;
        for (a, b) in w.nodes.iter().zip(&back.nodes) {
            check(outside_steps(&a.prompt) == outside_steps(&b.prompt), || {
                format!("{name}/{}: prompt differs outside Steps", a.name)
            })?;
            check(a.tools == b.tools, || format!("{name}/{}: tools differ", a.name))?;
        }
        check(back.context_info == w.context_info && back.action_info == w.action_info, || {
            format!("{name}: top-level literals differ")
        })?;
        check(workflow_placeholder_tokens(&back).is_subset(&workflow_placeholder_tokens(w)), || {
            format!("{name}: placeholders left unfilled")
        })?;
    }
    Ok("20/20 round-trips exact, ledger bijection 20/20".into())
}

fn random_edit(rng: &mut StdRng, w: &Workflow, fresh: &mut usize) -> WorkflowEdit {
    let names: Vec<String> = w.nodes.iter().map(|n| n.name.clone()).collect();
    let pick = |rng: &mut StdRng| names.choose(rng).cloned().unwrap_or_default();
    match rng.random_range(0..5) {
        0 => {
            *fresh += 1;
            let mut node = WorkflowNode::new(format!("X{fresh}"), "Purpose: added.");
            for _ in 0..rng.random_range(0..3) {
                node.parent.push(pick(rng));
            }
            for _ in 0..rng.random_range(0..2) {
                node.children.push(pick(rng));
            }
            WorkflowEdit::AddNode { node }
        }
        1 => WorkflowEdit::DeleteSubtree { name: pick(rng) },
        2 => {
            let edges: Vec<(String, String)> = w.edges().into_iter().collect();
            let remove = if rng.random_bool(0.5) {
                edges.choose(rng).map(|(a, b)| Edge::new(a, b))
            } else {
                None
            };
            let add = if remove.is_none() || rng.random_bool(0.7) {
                Some(Edge::new(pick(rng), pick(rng)))
            } else {
                None
            };
            WorkflowEdit::Reconnect { remove, add }
        }
        3 => WorkflowEdit::SetPrompt {
            name: pick(rng),
            prompt: format!("Purpose: changed {}.", rng.random::<u16>()),
        },
        _ => {
            let mut tools: Vec<String> = VOCABULARY
                .iter()
                .filter(|_| rng.random_bool(0.4))
                .map(|t| t.to_string())
                .collect();
            if rng.random_bool(0.1) {
                tools.push("browser.teleport".into());
            }
            WorkflowEdit::SetTools { name: pick(rng), tools }
        }
    }
}

fn p5() -> Outcome {
    let mut rng = StdRng::seed_from_u64(5);
    let (mut accepted, mut rejected, mut deletes) = (0usize, 0usize, 0usize);
    for seq in 0..10_000 {
        let mut w = random_dag(&mut rng, 8, 0.35);
        let mut fresh = 0;
        for _ in 0..rng.random_range(1..=6) {
            let edit = random_edit(&mut rng, &w, &mut fresh);
            match apply_edit(&w, &edit) {
                Ok(next) => {
                    accepted += 1;
                    let report = validate(&next);
                    check(report.errors.is_empty(), || {
                        format!("sequence {seq}: accepted {edit:?} left errors {:?}", report.errors)
                    })?;
                    check(!has_cycle(&next), || format!("sequence {seq}: cycle after {edit:?}"))?;
                    if let WorkflowEdit::DeleteSubtree { name } = &edit {
                        deletes += 1;
                        let mut expected = reachable(&w, name);
                        expected.insert(name.clone());
                        let removed: BTreeSet<String> = w.names().difference(&next.names()).cloned().collect();
                        check(removed == expected, || {
                            format!("sequence {seq}: deleting {name} removed {removed:?}, expected {expected:?}")
                        })?;
                    }
                    w = next;
                }
                Err(_) => rejected += 1,
            }
        }
    }
    Ok(format!("{accepted} accepted / {rejected} rejected edits, {deletes} cascade deletes match reachability"))
}

fn random_stream(rng: &mut StdRng) -> Vec<demoflow_core::DemoEvent> {
    let mut t = 1_700_000_000_000i64;
    let fields = ["a", "b", "c"];
    let mut out = Vec::new();
    for _ in 0..rng.random_range(0..40) {
        t += rng.random_range(0..900);
        let kind = ["text_input", "text_input", "text_input", "click", "navigation", "form_submit"]
            .choose(rng)
            .unwrap();
        let field = fields.choose(rng).unwrap();
        let raw = RawEvent {
            timestamp: chrono::DateTime::from_timestamp_millis(t)
                .unwrap()
                .to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            kind: kind.to_string(),
            page_url: format!("https://site.test/{}", rng.random_range(0..2)),
            page_title: String::new(),
            target: demoflow_core::ElementMeta {
                tag: "input".into(),
                id: Some(field.to_string()),
                ..Default::default()
            },
            value: Some("x".repeat(rng.random_range(1..20))),
        };
        out.push(validate_event(&raw).expect("generated events are valid"));
    }
    out
}

fn p6() -> Outcome {
    let raw = parse_jsonl(&read_fixture("logs/chic.jsonl")).map_err(|e| e.to_string())?;
    let log = capture_log("p6", &raw).map_err(|e| e.to_string())?;
    let inputs: Vec<_> = log.events.iter().filter(|e| e.kind == EventKind::TextInput).collect();
    let full = "Have a nice weekend in Chicago. This is one the most cleanest downtown I have ever seen in US.";
    check(inputs.len() == 1, || format!("{} input events survived", inputs.len()))?;
    check(inputs[0].value.as_deref() == Some(full) && inputs[0].finalized, || {
        format!("input value {:?}", inputs[0].value)
    })?;
    let text = render_log(&log).map_err(|e| e.to_string())?;
    check(text.matches("Input:").count() == 1 && !text.contains("CHic"), || {
        "rendered log keeps a truncated input".into()
    })?;
    let mut rng = StdRng::seed_from_u64(6);
    for i in 0..500 {
        let s = random_stream(&mut rng);
        let once = debounce_inputs(&s);
        check(debounce_inputs(&once) == once, || format!("stream {i} is not idempotent"))?;
    }
    Ok("one finalized input with the full sentence; debounce idempotent on 500/500 streams".into())
}

async fn p7() -> Outcome {
    let w = load_workflow("workflows/seven.json");
    check(w.nodes.len() == 7, || "fixture is not 7 nodes".into())?;
    let failing = "Middle";
    let driver = SimulatedDriver::from_path(&fixture("sites/bench.json"))
        .map_err(|e| e.to_string())?
        .fail_on("https://bench.test/middle");
    let exec = Executor::new(Arc::new(driver), Arc::new(ScriptedAgent));
    let session = Session::in_memory("p7").map_err(|e| e.to_string())?;
    let r = exec.execute(&w, &session, "run").await.map_err(|e| e.to_string())?;
    let plan = plan(&w).map_err(|e| e.to_string())?;
    let level = plan.level_of(failing).unwrap_or(0);
    check(level > 0 && level + 1 < plan.levels.len(), || format!("{failing} is not mid-level"))?;
    let by = |s: NodeStatus| -> BTreeSet<String> {
        r.results.values().filter(|n| n.status == s).map(|n| n.node_name.clone()).collect()
    };
    let expected_skipped = reachable(&w, failing);
    check(by(NodeStatus::Failed) == BTreeSet::from([failing.to_string()]), || {
        format!("failed set {:?}", by(NodeStatus::Failed))
    })?;
    check(by(NodeStatus::Skipped) == expected_skipped, || {
        format!("skipped {:?}, expected {expected_skipped:?}", by(NodeStatus::Skipped))
    })?;
    let independent: BTreeSet<String> = w
        .names()
        .into_iter()
        .filter(|n| n != failing && !expected_skipped.contains(n))
        .collect();
    check(by(NodeStatus::Succeeded) == independent, || {
        format!("succeeded {:?}, expected {independent:?}", by(NodeStatus::Succeeded))
    })?;
    check(r.results.len() == 7, || "missing results".into())?;
    let replayed = session.store.replay("p7", "run").map_err(|e| e.to_string())?;
    check(replayed == r.results, || "session replay differs".into())?;
    Ok(format!("{failing} failed, skipped {expected_skipped:?}, {} independent nodes succeeded", independent.len()))
}

const VALID_CONTEXT: &str =
    r#"{"goal":"g","interests":[],"constraints":[],"values":["v"],"entities":[]}"#;

async fn p8() -> Outcome {
    let faults: Vec<(&str, String)> = vec![
        ("fenced", format!("```json\n{VALID_CONTEXT}\n```")),
        ("prose", format!("Sure! Here is the JSON you asked for: {VALID_CONTEXT} Hope that helps.")),
        ("truncated", VALID_CONTEXT[..30].to_string()),
        ("missing-keys", r#"{"goal":"g"}"#.to_string()),
        ("array", "[1,2,3]".to_string()),
        ("empty", String::new()),
        ("garbage", "<html>503</html>".to_string()),
        ("unbalanced", "{{{{".to_string()),
    ];
    let good = |raw: &str| raw == VALID_CONTEXT || raw.contains(VALID_CONTEXT);
    let mut cases = 0;
    for (label, fault) in &faults {
        let recoverable = good(fault);
        for repeats in 0..=3usize {
            cases += 1;
            let mut script: Vec<Result<String, BackendError>> = vec![Ok(fault.clone()); repeats];
            script.push(Ok(VALID_CONTEXT.to_string()));
            let backend = Arc::new(ScriptedBackend::new(script));
            let gw = Gateway::new(backend);
            let req = gw.request("system".into(), "user".into());
            let run = AssertUnwindSafe(gw.complete_validated(&req, JsonContract::ContextInfo, 2))
                .catch_unwind()
                .await
                .map_err(|_| format!("{label} x{repeats}: panicked"))?;
            match run {
                Ok(done) => {
                    let expected_retries = if recoverable { 0 } else { repeats };
                    check(done.retries == expected_retries && done.retries <= 2, || {
                        format!("{label} x{repeats}: recovered after {} retries", done.retries)
                    })?;
                }
                Err(LlmError::ContractViolation { attempts, .. }) => {
                    check(!recoverable && repeats > 2 && attempts == 3, || {
                        format!("{label} x{repeats}: unexpected contract violation")
                    })?;
                }
                Err(e) => return Err(format!("{label} x{repeats}: unstructured error {e}")),
            }
        }
    }
    for transient in 0..=3usize {
        cases += 1;
        let mut script: Vec<Result<String, BackendError>> =
            vec![Err(BackendError::Transient("timeout".into())); transient];
        script.push(Ok(VALID_CONTEXT.to_string()));
        let gw = Gateway::new(Arc::new(ScriptedBackend::new(script)));
        let req = gw.request("system".into(), "user".into());
        let run = AssertUnwindSafe(gw.complete_validated(&req, JsonContract::ContextInfo, 2))
            .catch_unwind()
            .await
            .map_err(|_| format!("transient x{transient}: panicked"))?;
        match (transient, run) {
            (0..=2, Ok(_)) | (3, Err(LlmError::Backend(BackendError::Transient(_)))) => {}
            (n, other) => return Err(format!("transient x{n}: {other:?}")),
        }
    }
    Ok(format!("{cases} fault cases, all recovered within 2 retries or structured errors, no panics"))
}

fn p9() -> Outcome {
    let corpus = corpus();
    check(corpus.len() == 20, || format!("{} corpus workflows", corpus.len()))?;
    for (name, w) in &corpus {
        let bytes = export_bundle(w).map_err(|e| format!("{name}: {e}"))?;
        let imported = import_bundle(&bytes).map_err(|e| format!("{name}: {e}"))?;
        check(imported.workflow_json == w.to_json(), || format!("{name}: workflow.json differs"))?;
        let again = export_bundle(&imported.workflow).map_err(|e| format!("{name}: {e}"))?;
        check(again == bytes, || format!("{name}: re-export is not byte-identical"))?;
        check(imported.manifest.plan.levels == oracle_plan(w), || {
            format!("{name}: manifest levels differ from the level oracle")
        })?;
        check(imported.manifest.plan == plan(w).map_err(|e| e.to_string())?, || {
            format!("{name}: manifest plan differs from plan()")
        })?;
    }
    Ok("20/20 bundles byte-identical, manifest levels equal plan()".into())
}

fn report(id: &str, title: &str, outcome: Outcome, failures: &mut Vec<String>) {
    match outcome {
        Ok(detail) => println!("{id} PASS  {title}: {detail}"),
        Err(why) => {
            println!("{id} FAIL  {title}: {why}");
            failures.push(id.to_string());
        }
    }
}

fn main() {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .expect("runtime");
    let mut failures = Vec::new();
    let guard = |f: &dyn Fn() -> Outcome| {
        std::panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()))
    };
    report("P1", "Kahn leveling oracle", guard(&p1), &mut failures);
    report("P2", "level concurrency", guard(&|| rt.block_on(p2())), &mut failures);
    report("P3", "golden generation", guard(&|| rt.block_on(p3())), &mut failures);
    report("P4", "generalization round-trip", guard(&|| rt.block_on(p4())), &mut failures);
    report("P5", "edit algebra safety", guard(&p5), &mut failures);
    report("P6", "event pipeline", guard(&p6), &mut failures);
    report("P7", "failure containment", guard(&|| rt.block_on(p7())), &mut failures);
    report("P8", "JSON contract robustness", guard(&|| rt.block_on(p8())), &mut failures);
    report("P9", "bundle round-trip", guard(&p9), &mut failures);
    if failures.is_empty() {
        println!("acceptance: 9/9 criteria passed");
    } else {
        println!("acceptance: {} failed: {}", failures.len(), failures.join(", "));
        std::process::exit(1);
    }
}
