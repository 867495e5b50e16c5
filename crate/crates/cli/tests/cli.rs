use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Duration;

use demoflow_core::workflow::{validate, Workflow};
use serde_json::Value;
use tempfile::TempDir;

fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures").join(rel)
}

/// Runs the binary with a clean `DEMOFLOW_*` environment.
fn demoflow(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_demoflow"));
    for (k, _) in std::env::vars() {
        if k.starts_with("DEMOFLOW_") {
            cmd.env_remove(k);
        }
    }
    cmd.args(args).envs(env.iter().copied()).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = demoflow(args, &[]);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn error_json(out: &Output) -> Value {
    let line = String::from_utf8_lossy(&out.stderr);
    let last = line.lines().last().unwrap_or_default();
    serde_json::from_str(last).unwrap_or_else(|_| panic!("not a JSON error: {line}"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate_kayak(dir: &TempDir, name: &str) -> PathBuf {
    let out = dir.path().join(name);
    ok(&["generate", "--log", s(&fixture("logs/kayak.jsonl")), "--out", s(&out), "--backend", "mock"]);
    out
}

#[test]
fn plan_prints_levels() {
    let out = ok(&["plan", "--workflow", s(&fixture("workflows/diamond.json"))]);
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), r#"[["A"],["B","C"],["D"]]"#);
}

#[test]
fn generate_is_byte_stable_and_has_one_sink() {
    let dir = TempDir::new().unwrap();
    let a = std::fs::read(generate_kayak(&dir, "a.json")).unwrap();
    let b = std::fs::read(generate_kayak(&dir, "b.json")).unwrap();
    assert_eq!(a, b);
    let w = Workflow::from_json(std::str::from_utf8(&a).unwrap()).unwrap();
    assert!(validate(&w).errors.is_empty());
    assert_eq!(w.sinks().len(), 1);
    let search = w.nodes.iter().find(|n| n.name.starts_with("Search")).expect("a search node");
    assert!(search.prompt.contains("kayak.com"));
    assert!(search.prompt.contains("'New York'") && search.prompt.contains("'San Francisco'"));

    let stdout = ok(&["generate", "--log", s(&fixture("logs/kayak.jsonl")), "-q"]);
    assert_eq!(stdout.stdout, [a.as_slice(), b"\n"].concat());
    assert!(stdout.stderr.is_empty());
}

#[test]
fn simulated_execution_reaches_the_results_page() {
    let dir = TempDir::new().unwrap();
    let w = generate_kayak(&dir, "kayak.json");
    let result = dir.path().join("result.json");
    ok(&[
        "execute", "--workflow", s(&w), "--driver", "simulated", "--fixtures", s(&fixture("sites")), "--out", s(&result),
    ]);
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&result).unwrap()).unwrap();
    assert!(r["final_output"].as_str().unwrap().contains("San Francisco"));
    assert!(r["results"].as_object().unwrap().values().all(|n| n["status"] == "succeeded"));
}

#[test]
fn adapted_routes_execute() {
    let dir = TempDir::new().unwrap();
    let w = generate_kayak(&dir, "kayak.json");
    let adapted = dir.path().join("boston.json");
    ok(&[
        "adapt", "--workflow", s(&w), "--instruction", "fly from Boston to Chicago instead", "--out", s(&adapted),
    ]);
    let out = ok(&["execute", "--workflow", s(&adapted), "--fixtures", s(&fixture("sites"))]);
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(r["final_output"].as_str().unwrap().contains("Flights from Boston to Chicago"));
}

#[test]
fn export_import_round_trips_exactly() {
    let dir = TempDir::new().unwrap();
    for name in ["diamond", "chain4", "seven"] {
        let src = fixture(&format!("workflows/{name}.json"));
        let original = Workflow::from_json(&std::fs::read_to_string(&src).unwrap()).unwrap().to_json();
        let bundle = dir.path().join(format!("{name}.zip"));
        let back = dir.path().join(format!("{name}.json"));
        ok(&["export", "--workflow", s(&src), "--out", s(&bundle)]);
        ok(&["import", "--bundle", s(&bundle), "--out", s(&back)]);
        assert_eq!(std::fs::read_to_string(&back).unwrap(), original, "{name}");
        let again = dir.path().join(format!("{name}-again.zip"));
        ok(&["export", "--workflow", s(&back), "--out", s(&again)]);
        assert_eq!(std::fs::read(&bundle).unwrap(), std::fs::read(&again).unwrap());
    }
    let manifest = ok(&["import", "--bundle", s(&dir.path().join("diamond.zip")), "--manifest"]);
    let m: Value = serde_json::from_slice(&manifest.stdout).unwrap();
    assert_eq!(m["plan"]["levels"], serde_json::json!([["A"], ["B", "C"], ["D"]]));
}

#[test]
fn exit_codes_follow_the_failing_stage() {
    let dir = TempDir::new().unwrap();
    let cyclic = dir.path().join("cyclic.json");
    std::fs::write(&cyclic, Workflow::from_edges(&["A", "B"], &[("A", "B"), ("B", "A")]).to_json()).unwrap();
    let out = demoflow(&["plan", "--workflow", s(&cyclic)], &[]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["stage"], "plan");

    let empty = dir.path().join("empty.jsonl");
    std::fs::write(&empty, "").unwrap();
    let out = demoflow(&["generate", "--log", s(&empty)], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["code"], "generation");

    let out = demoflow(
        &["execute", "--workflow", s(&fixture("workflows/diamond.json")), "--fixtures", s(&fixture("sites/kayak.json"))],
        &[],
    );
    assert_eq!(out.status.code(), Some(3));
    let err = error_json(&out);
    assert_eq!(err["code"], "execution");
    assert!(err["message"].as_str().unwrap().contains("failed"));
    let partial: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(partial["results"]["A"]["status"], "failed");

    let out = demoflow(&["execute", "--workflow", s(&fixture("workflows/diamond.json")), "--driver", "cdp", "--cdp-endpoint", "ws://127.0.0.1:9/x"], &[]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_json(&out)["stage"], "driver");

    let out = demoflow(&["import", "--bundle", s(&dir.path().join("missing.zip"))], &[]);
    assert_eq!(out.status.code(), Some(4));
    let out = demoflow(&["import", "--bundle", s(&cyclic)], &[]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn flags_beat_environment_beat_config_file() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("demoflow.toml");
    std::fs::write(&config, "backend = \"network\"\n").unwrap();
    let log = fixture("logs/kayak.jsonl");

    let out = demoflow(&["generate", "--config", s(&config), "--log", s(&log)], &[]);
    assert_eq!(out.status.code(), Some(1), "network backend without endpoint is a config error");
    assert!(error_json(&out)["message"].as_str().unwrap().contains("llm_endpoint"));

    let out = demoflow(&["generate", "--config", s(&config), "--log", s(&log), "-q"], &[("DEMOFLOW_BACKEND", "mock")]);
    assert!(out.status.success());

    let out = demoflow(&["generate", "--log", s(&log), "-q"], &[("DEMOFLOW_BACKEND", "bogus")]);
    assert_eq!(out.status.code(), Some(1));
    let out = demoflow(&["generate", "--log", s(&log), "-q", "--backend", "mock"], &[("DEMOFLOW_BACKEND", "bogus")]);
    assert!(out.status.success());

    let store = dir.path().join("history.db");
    let out = demoflow(
        &["execute", "--workflow", s(&fixture("workflows/diamond.json")), "--fixtures", s(&fixture("sites")), "-q"],
        &[("DEMOFLOW_STORE_PATH", s(&store))],
    );
    assert!(out.status.success());
    assert!(out.stderr.is_empty());
    assert!(store.exists());

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "colour = \"blue\"\n").unwrap();
    assert_eq!(demoflow(&["plan", "--config", s(&bad), "--workflow", s(&fixture("workflows/diamond.json"))], &[]).status.code(), Some(1));
    assert_eq!(demoflow(&["plan", "--config", s(&dir.path().join("none.toml")), "--workflow", "x"], &[]).status.code(), Some(4));
}

#[test]
fn quiet_runs_print_only_results() {
    let dir = TempDir::new().unwrap();
    let out_file = dir.path().join("w.json");
    let loud = demoflow(&["generate", "--log", s(&fixture("logs/kayak.jsonl")), "--out", s(&out_file)], &[]);
    assert!(!loud.stderr.is_empty());
    let quiet = demoflow(&["generate", "--log", s(&fixture("logs/kayak.jsonl")), "--out", s(&out_file), "--quiet"], &[]);
    assert!(quiet.status.success());
    assert!(quiet.stdout.is_empty() && quiet.stderr.is_empty());
    let export = demoflow(&["export", "--workflow", s(&out_file), "--out", s(&dir.path().join("b.zip")), "-q"], &[]);
    assert!(export.stdout.is_empty() && export.stderr.is_empty());
}

struct Child(std::process::Child);

impl Drop for Child {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[tokio::test]
async fn serve_answers_http() {
    let dir = TempDir::new().unwrap();
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let config = dir.path().join("serve.toml");
    std::fs::write(
        &config,
        format!(
            "listen = \"127.0.0.1:{port}\"\nstore_path = \"{}\"\nfixtures = \"{}\"\nthrottle_ms = 50\n",
            s(&dir.path().join("service.db")),
            s(&fixture("sites")),
        ),
    )
    .unwrap();
    let _child = Child(
        Command::new(env!("CARGO_BIN_EXE_demoflow"))
            .args(["serve", "--config", s(&config), "--quiet"])
            .env_remove("DEMOFLOW_STORE_PATH")
            .env_remove("DEMOFLOW_BACKEND")
            .spawn()
            .unwrap(),
    );
    let http = reqwest::Client::new();
    let base = format!("http://127.0.0.1:{port}");
    let mut created = None;
    for _ in 0..100 {
        if let Ok(r) = http.post(format!("{base}/sessions")).send().await {
            created = Some(r);
            break;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    let r = created.expect("server did not come up");
    assert_eq!(r.status(), reqwest::StatusCode::CREATED);
    let body: Value = r.json().await.unwrap();
    assert_eq!(body["phase"], "idle");
    let templates: Value = http.get(format!("{base}/templates")).send().await.unwrap().json().await.unwrap();
    assert_eq!(templates, serde_json::json!([]));
    assert!(dir.path().join("service.db").exists());
}
