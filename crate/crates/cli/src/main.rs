//! `demoflow`: headless entry point.
//!
//! Results go to stdout as JSON unless `--out` names a file. Failures print
//! one JSON error object on stderr and exit with the code of their class:
//! 1 validation, 2 generation, 3 execution, 4 I/O.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use demoflow_core::capture::{capture_log, parse_jsonl, CaptureError};
use demoflow_core::execution::bundle::{export_bundle, import_bundle, BundleError};
use demoflow_core::execution::{plan, ExecutionError, Executor, NodeStatus, Session};
use demoflow_core::generalization::{adapt, GeneralizationError};
use demoflow_core::generation::{generate_detailed, GenerationError};
use demoflow_core::workflow::{validate, Workflow};
use demoflow_server::config::{BackendKind, DriverKind};
use demoflow_server::{ConfigError, ErrorBody, ServiceConfig};
use serde::Serialize;
use thiserror::Error;

#[derive(Parser, Debug)]
#[command(name = "demoflow", version, about = "Turn recorded browser demonstrations into executable workflows")]
struct Cli {
    /// TOML configuration file. Flags override environment, which overrides the file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Print nothing but results and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct BackendArgs {
    /// LLM backend: mock or network.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    model_id: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        listen: Option<String>,
        #[arg(long)]
        store: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long)]
        driver: Option<String>,
        #[arg(long)]
        fixtures: Option<PathBuf>,
        #[arg(long)]
        cdp_endpoint: Option<String>,
    },
    /// Build a workflow from a recorded event log (JSON Lines).
    Generate {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Re-target a workflow with a natural-language instruction.
    Adapt {
        #[arg(long)]
        workflow: PathBuf,
        #[arg(long)]
        instruction: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Print the execution levels.
    Plan {
        #[arg(long)]
        workflow: PathBuf,
    },
    /// Run a workflow.
    Execute {
        #[arg(long)]
        workflow: PathBuf,
        /// simulated or cdp.
        #[arg(long)]
        driver: Option<String>,
        /// Page fixtures for the simulated driver.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        #[arg(long)]
        cdp_endpoint: Option<String>,
        /// Per-action delay of the simulated driver.
        #[arg(long)]
        latency_ms: Option<u64>,
        /// Session history database; in-memory when unset.
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
    },
    /// Write a portable execution bundle.
    Export {
        #[arg(long)]
        workflow: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Read a bundle back and print its workflow.
    Import {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the manifest instead of the workflow.
        #[arg(long)]
        manifest: bool,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{message}")]
    Validation { message: String, stage: &'static str },
    #[error("{message}")]
    Generation { message: String, stage: String },
    #[error("{message}")]
    Execution { message: String, stage: &'static str },
    #[error("{message}")]
    Io { message: String },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation { .. } => 1,
            CliError::Generation { .. } => 2,
            CliError::Execution { .. } => 3,
            CliError::Io { .. } => 4,
        }
    }

    fn body(&self) -> ErrorBody {
        let (code, stage) = match self {
            CliError::Validation { stage, .. } => ("validation", stage.to_string()),
            CliError::Generation { stage, .. } => ("generation", stage.clone()),
            CliError::Execution { stage, .. } => ("execution", stage.to_string()),
            CliError::Io { .. } => ("io", "io".to_string()),
        };
        ErrorBody {
            code: code.into(),
            message: self.to_string(),
            stage: Some(stage),
            details: None,
        }
    }

    fn validation(stage: &'static str, e: impl ToString) -> Self {
        CliError::Validation {
            message: e.to_string(),
            stage,
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io {
            message: format!("{}: {e}", path.display()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Read { .. } => CliError::Io { message: e.to_string() },
            _ => CliError::validation("config", e),
        }
    }
}

impl From<GenerationError> for CliError {
    fn from(e: GenerationError) -> Self {
        match e {
            GenerationError::Capture(c) => CliError::validation("capture", c),
            other => CliError::Generation {
                stage: other.stage().to_string(),
                message: other.to_string(),
            },
        }
    }
}

impl From<GeneralizationError> for CliError {
    fn from(e: GeneralizationError) -> Self {
        match e {
            GeneralizationError::InvalidWorkflow(_) => CliError::validation("precondition", e),
            other => CliError::Generation {
                stage: other.stage().to_string(),
                message: other.to_string(),
            },
        }
    }
}

impl From<BundleError> for CliError {
    fn from(e: BundleError) -> Self {
        match e {
            BundleError::Io(_) => CliError::Io { message: e.to_string() },
            _ => CliError::validation("bundle", e),
        }
    }
}

struct Ctx {
    quiet: bool,
    config: ServiceConfig,
}

impl Ctx {
    fn note(&self, msg: impl std::fmt::Display) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }

    /// Writes `text` to `out`, or prints it when no file was given.
    fn emit(&self, out: Option<&Path>, text: &str) -> Result<(), CliError> {
        match out {
            Some(path) => {
                std::fs::write(path, text).map_err(|e| CliError::io(path, e))?;
                self.note(format_args!("wrote {}", path.display()));
            }
            None => println!("{}", text.trim_end()),
        }
        Ok(())
    }

    fn apply_backend(&mut self, args: &BackendArgs) -> Result<(), CliError> {
        if let Some(b) = &args.backend {
            self.config.backend = b.parse::<BackendKind>()?;
        }
        if let Some(m) = &args.model_id {
            self.config.model_id = m.clone();
        }
        Ok(())
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn load_workflow(path: &Path) -> Result<Workflow, CliError> {
    let text = read(path)?;
    Workflow::from_json(&text).map_err(|e| CliError::validation("workflow", format!("{}: {e}", path.display())))
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable output") + "\n"
}

/// Environment variables made irrelevant by flags on the command line.
fn shadowed_env(command: &Command) -> Vec<&'static str> {
    use demoflow_server::config::{ENV_BACKEND, ENV_CDP_ENDPOINT, ENV_MODEL_ID, ENV_STORE_PATH};
    let (backend, cdp, store) = match command {
        Command::Serve {
            backend,
            cdp_endpoint,
            store,
            ..
        }
        | Command::Execute {
            backend,
            cdp_endpoint,
            store,
            ..
        } => (Some(backend), cdp_endpoint.is_some(), store.is_some()),
        Command::Generate { backend, .. } | Command::Adapt { backend, .. } => (Some(backend), false, false),
        _ => (None, false, false),
    };
    let mut keys = Vec::new();
    if backend.is_some_and(|b| b.backend.is_some()) {
        keys.push(ENV_BACKEND);
    }
    if backend.is_some_and(|b| b.model_id.is_some()) {
        keys.push(ENV_MODEL_ID);
    }
    if cdp {
        keys.push(ENV_CDP_ENDPOINT);
    }
    if store {
        keys.push(ENV_STORE_PATH);
    }
    keys
}

fn load_config(cli: &Cli) -> Result<ServiceConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => ServiceConfig::from_file(path)?,
        None => ServiceConfig::default(),
    };
    let shadowed = shadowed_env(&cli.command);
    config.apply_env(|k| if shadowed.contains(&k) { None } else { std::env::var(k).ok() })?;
    Ok(config)
}

async fn run(cli: Cli) -> Result<(), CliError> {
    let mut ctx = Ctx {
        quiet: cli.quiet,
        config: load_config(&cli)?,
    };
    match cli.command {
        Command::Serve {
            listen,
            store,
            backend,
            driver,
            fixtures,
            cdp_endpoint,
        } => {
            ctx.apply_backend(&backend)?;
            let c = &mut ctx.config;
            if let Some(v) = listen {
                c.listen = v;
            }
            if let Some(v) = store {
                c.store_path = Some(v);
            }
            if let Some(v) = driver {
                c.driver = v.parse::<DriverKind>()?;
            }
            if let Some(v) = fixtures {
                c.fixtures = Some(v);
            }
            if let Some(v) = cdp_endpoint {
                c.cdp_endpoint = Some(v);
            }
            demoflow_server::serve(&ctx.config).await.map_err(|e| match e {
                demoflow_server::ServeError::Config(c) => CliError::from(c),
                other => CliError::Io {
                    message: other.to_string(),
                },
            })
        }
        Command::Generate { log, out, backend } => {
            ctx.apply_backend(&backend)?;
            let raw = parse_jsonl(&read(&log)?).map_err(|e| CliError::validation("capture", e))?;
            let demo = capture_log(&log.display().to_string(), &raw).map_err(|e| match e {
                CaptureError::EmptyLog => CliError::from(GenerationError::EmptyLog),
                other => CliError::validation("capture", other),
            })?;
            ctx.note(format_args!("{} of {} events kept", demo.len(), raw.len()));
            let generated = generate_detailed(&ctx.config.gateway()?, &demo).await?;
            if let Some(reason) = &generated.fallback_reason {
                ctx.note(format_args!("synthesis fell back to a linear workflow: {reason}"));
            }
            ctx.emit(out.as_deref(), &generated.workflow.to_json())
        }
        Command::Adapt {
            workflow,
            instruction,
            out,
            backend,
        } => {
            ctx.apply_backend(&backend)?;
            let w = load_workflow(&workflow)?;
            let a = adapt(&ctx.config.gateway()?, &w, &instruction).await?;
            for n in &a.notes {
                ctx.note(n);
            }
            for n in a.workflow.fill_notes.iter().flatten() {
                ctx.note(format_args!("{}: {}", n.placeholder, n.decision));
            }
            ctx.emit(out.as_deref(), &a.workflow.to_json())
        }
        Command::Plan { workflow } => {
            let w = load_workflow(&workflow)?;
            let p = plan(&w).map_err(|_| {
                let report = validate(&w);
                let list: Vec<String> = report.errors.iter().map(|v| v.message.clone()).collect();
                CliError::validation("plan", format!("workflow is not executable: {}", list.join("; ")))
            })?;
            ctx.emit(None, &serde_json::to_string(&p.levels).expect("levels serialize"))
        }
        Command::Execute {
            workflow,
            driver,
            fixtures,
            cdp_endpoint,
            latency_ms,
            store,
            out,
            backend,
        } => {
            ctx.apply_backend(&backend)?;
            let c = &mut ctx.config;
            if let Some(v) = driver {
                c.driver = v.parse::<DriverKind>()?;
            }
            if let Some(v) = fixtures {
                c.fixtures = Some(v);
            }
            if let Some(v) = cdp_endpoint {
                c.cdp_endpoint = Some(v);
            }
            if let Some(v) = latency_ms {
                c.latency_ms = v;
            }
            if let Some(v) = store {
                c.store_path = Some(v);
            }
            execute(&ctx, &workflow, out.as_deref()).await
        }
        Command::Export { workflow, out } => {
            let w = load_workflow(&workflow)?;
            let bytes = export_bundle(&w)?;
            std::fs::write(&out, bytes).map_err(|e| CliError::io(&out, e))?;
            ctx.note(format_args!("wrote {}", out.display()));
            Ok(())
        }
        Command::Import { bundle, out, manifest } => {
            let bytes = std::fs::read(&bundle).map_err(|e| CliError::io(&bundle, e))?;
            let imported = import_bundle(&bytes)?;
            if manifest {
                ctx.emit(out.as_deref(), &json(&imported.manifest))
            } else {
                ctx.emit(out.as_deref(), &imported.workflow_json)
            }
        }
    }
}

async fn execute(ctx: &Ctx, workflow: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let w = load_workflow(workflow)?;
    plan(&w).map_err(|e| CliError::validation("plan", e))?;
    let gateway = ctx.config.gateway()?;
    let driver = ctx
        .config
        .driver_source()?
        .connect()
        .await
        .map_err(|e| CliError::Execution {
            message: e.to_string(),
            stage: "driver",
        })?;
    let store = Arc::new(ctx.config.open_store(None)?);
    let executor = Executor::new(driver, ctx.config.agent(&gateway)).with_limits(ctx.config.limits());
    let session = Session::new("cli", store);
    let execution_id = uuid::Uuid::new_v4().to_string();
    let result = match executor.execute(&w, &session, &execution_id).await {
        Ok(r) => r,
        Err(ExecutionError::Aborted { reason, partial }) => {
            ctx.emit(out, &json(&partial))?;
            return Err(CliError::Execution {
                message: format!("execution aborted: {reason}"),
                stage: "driver",
            });
        }
        Err(ExecutionError::Plan(e)) => return Err(CliError::validation("plan", e)),
        Err(e @ ExecutionError::Store(_)) => {
            return Err(CliError::Execution {
                message: e.to_string(),
                stage: "store",
            })
        }
    };
    ctx.emit(out, &json(&result))?;
    for warning in &result.warnings {
        ctx.note(format_args!("warning: {warning}"));
    }
    let failed = result.with_status(NodeStatus::Failed);
    if !failed.is_empty() {
        return Err(CliError::Execution {
            message: format!(
                "{} node(s) failed ({}), {} skipped",
                failed.len(),
                failed.join(", "),
                result.with_status(NodeStatus::Skipped).len()
            ),
            stage: "node",
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet {
        tracing::Level::ERROR
    } else {
        tracing::Level::INFO
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .init();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("{}", serde_json::json!({"code": "io", "message": e.to_string(), "stage": "runtime"}));
            return ExitCode::from(4);
        }
    };
    match runtime.block_on(run(cli)) {
        Ok(()) => {
            runtime.shutdown_timeout(Duration::from_millis(100));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e.body()).expect("error body serializes"));
            ExitCode::from(e.exit_code())
        }
    }
}
