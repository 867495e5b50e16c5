//! Node agents and the permission-checked tool surface they act through.

use std::collections::BTreeSet;
use std::sync::{Arc, OnceLock};

use async_trait::async_trait;
use regex::Regex;
use serde::Deserialize;
use serde_json::json;
use thiserror::Error;

use super::driver::{absolute_url, BrowserDriver, DriverError, PageSnapshot, TabId};
use super::{ActionRecord, NodeResult};
use crate::llm::Gateway;
use crate::workflow::steps::{parse_steps, site_of, Step};
use crate::workflow::WorkflowNode;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ToolError {
    #[error("permission violation: `{0}` is not granted to this node")]
    Permission(String),
    #[error("action budget of {0} exhausted")]
    Budget(usize),
    #[error("{0}")]
    Action(String),
    #[error("driver disconnected: {0}")]
    Disconnected(String),
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum AgentError {
    #[error(transparent)]
    Tool(#[from] ToolError),
    #[error("agent contract violation: {0}")]
    Contract(String),
    #[error("{0}")]
    Other(String),
}

/// Driver access for one node: only granted tools, at most `budget` calls,
/// every call recorded.
pub struct ToolBox {
    driver: Arc<dyn BrowserDriver>,
    allowed: BTreeSet<String>,
    budget: usize,
    records: Vec<ActionRecord>,
    tabs: Vec<TabId>,
}

impl ToolBox {
    pub fn new(driver: Arc<dyn BrowserDriver>, tools: &[String], budget: usize) -> Self {
        ToolBox {
            driver,
            allowed: tools.iter().cloned().collect(),
            budget,
            records: Vec::new(),
            tabs: Vec::new(),
        }
    }

    pub fn records(&self) -> &[ActionRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<ActionRecord> {
        self.records
    }

    pub fn opened_tabs(&self) -> &[TabId] {
        &self.tabs
    }

    fn admit(&mut self, tool: &str, target: &str, value: Option<&str>) -> Result<(), ToolError> {
        let refusal = if !self.allowed.contains(tool) {
            Some(ToolError::Permission(tool.to_string()))
        } else if self.records.len() >= self.budget {
            Some(ToolError::Budget(self.budget))
        } else {
            None
        };
        match refusal {
            Some(e) => {
                self.records.push(ActionRecord {
                    tool: tool.to_string(),
                    target: target.to_string(),
                    value: value.map(str::to_string),
                    ok: false,
                    error: Some(e.to_string()),
                });
                Err(e)
            }
            None => Ok(()),
        }
    }

    fn record<T>(&mut self, tool: &str, target: &str, value: Option<&str>, r: Result<T, DriverError>) -> Result<T, ToolError> {
        self.records.push(ActionRecord {
            tool: tool.to_string(),
            target: target.to_string(),
            value: value.map(str::to_string),
            ok: r.is_ok(),
            error: r.as_ref().err().map(|e| e.to_string()),
        });
        r.map_err(|e| match e {
            DriverError::Action(m) => ToolError::Action(m),
            DriverError::Disconnected(m) => ToolError::Disconnected(m),
        })
    }

    pub async fn open(&mut self, url: &str) -> Result<TabId, ToolError> {
        self.admit("browser.open", url, None)?;
        let r = self.driver.open_tab(url).await;
        let tab = self.record("browser.open", url, None, r)?;
        self.tabs.push(tab);
        Ok(tab)
    }

    pub async fn click(&mut self, tab: TabId, descriptor: &str) -> Result<(), ToolError> {
        self.admit("browser.click", descriptor, None)?;
        let r = self.driver.click(tab, descriptor).await;
        self.record("browser.click", descriptor, None, r)
    }

    pub async fn fill(&mut self, tab: TabId, descriptor: &str, value: &str) -> Result<(), ToolError> {
        self.admit("browser.fill", descriptor, Some(value))?;
        let r = self.driver.fill(tab, descriptor, value).await;
        self.record("browser.fill", descriptor, Some(value), r)
    }

    pub async fn read(&mut self, tab: TabId) -> Result<PageSnapshot, ToolError> {
        self.admit("browser.read", "page", None)?;
        let r = self.driver.read_page(tab).await;
        self.record("browser.read", "page", None, r)
    }

    pub async fn fetch(&mut self, url: &str) -> Result<String, ToolError> {
        self.admit("api.fetch", url, None)?;
        let r = self.driver.fetch(url).await;
        self.record("api.fetch", url, None, r)
    }

    pub async fn close_all(&mut self) {
        for tab in self.tabs.drain(..) {
            let _ = self.driver.close_tab(tab).await;
        }
    }
}

/// What a node agent receives: its node and the results of its ancestors
/// in execution order.
#[derive(Debug, Clone)]
pub struct NodeTask {
    pub node: WorkflowNode,
    pub ancestors: Vec<NodeResult>,
}

impl NodeTask {
    /// Page to resume on: the named ancestor's final page when it is on
    /// `site`, otherwise the site's front page.
    pub fn resume_url(&self, from: &str, site: &str) -> String {
        self.ancestors
            .iter()
            .find(|r| r.node_name == from)
            .and_then(|r| r.final_url.clone())
            .filter(|u| site_of(u) == site_of(site))
            .unwrap_or_else(|| absolute_url(site))
    }

    /// Ancestor outputs rendered as `## name` sections.
    pub fn history(&self) -> String {
        self.ancestors
            .iter()
            .map(|r| format!("## {}\n{}\n", r.node_name, r.output.trim_end()))
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentOutcome {
    pub output: String,
    pub final_url: Option<String>,
}

#[async_trait]
pub trait NodeAgent: Send + Sync {
    async fn run(&self, task: &NodeTask, tools: &mut ToolBox) -> Result<AgentOutcome, AgentError>;
}

/// Follows the prompt's `Steps:` literally. Nodes without browser steps
/// summarize their ancestors.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptedAgent;

fn fallback_steps(prompt: &str) -> Vec<Step> {
    static DOMAIN: OnceLock<Regex> = OnceLock::new();
    static VIA: OnceLock<Regex> = OnceLock::new();
    let purpose = prompt
        .find("Purpose:")
        .map(|i| {
            let rest = &prompt[i..];
            &rest[..rest.find("Inputs:").unwrap_or(rest.len())]
        })
        .unwrap_or("");
    let domain = DOMAIN.get_or_init(|| Regex::new(r"\b[a-z0-9-]+(?:\.[a-z0-9-]+)*\.[a-z]{2,}(?:/\S*[^\s.,;])?").unwrap());
    let Some(site) = domain.find(purpose) else {
        return Vec::new();
    };
    let mut steps = vec![Step::Open {
        target: site.as_str().to_string(),
    }];
    let via = VIA.get_or_init(|| Regex::new(r"via '([^']+)'").unwrap());
    if let Some(c) = via.captures(purpose) {
        steps.push(Step::Click { label: c[1].to_string() });
    }
    steps.push(Step::Read);
    steps
}

#[async_trait]
impl NodeAgent for ScriptedAgent {
    async fn run(&self, task: &NodeTask, tools: &mut ToolBox) -> Result<AgentOutcome, AgentError> {
        let mut steps = parse_steps(&task.node.prompt);
        if steps.is_empty() {
            steps = fallback_steps(&task.node.prompt);
        }
        if steps.is_empty() {
            let history = task.history();
            let output = if history.is_empty() {
                format!("{}: nothing to summarize.", task.node.name)
            } else {
                format!("Summary of {} upstream result(s):\n\n{history}", task.ancestors.len())
            };
            return Ok(AgentOutcome { output, final_url: None });
        }
        let mut tab: Option<TabId> = None;
        let mut snapshot: Option<PageSnapshot> = None;
        let mut notes: Vec<String> = Vec::new();
        let need_tab = |tab: Option<TabId>| tab.ok_or_else(|| AgentError::Other("no page is open".into()));
        for step in &steps {
            match step {
                Step::Open { target } => {
                    tab = Some(tools.open(&absolute_url(target)).await?);
                    snapshot = None;
                }
                Step::Continue { site, from } => {
                    tab = Some(tools.open(&task.resume_url(from, site)).await?);
                    snapshot = None;
                }
                Step::Click { label } => {
                    tools.click(need_tab(tab)?, label).await?;
                    notes.push(format!("clicked '{label}'"));
                    snapshot = None;
                }
                Step::Submit { label } => {
                    tools.click(need_tab(tab)?, label).await?;
                    notes.push(format!("submitted '{label}'"));
                    snapshot = None;
                }
                Step::Fill { field, value } => {
                    tools.fill(need_tab(tab)?, field, value).await?;
                    notes.push(format!("entered '{value}' into '{field}'"));
                }
                Step::SelectText { value } => {
                    let page = tools.read(need_tab(tab)?).await?;
                    if page.text.contains(value.as_str()) {
                        notes.push(format!("selected '{value}'"));
                    } else {
                        notes.push(format!("'{value}' not found on the page"));
                    }
                    snapshot = Some(page);
                }
                Step::Read => snapshot = Some(tools.read(need_tab(tab)?).await?),
            }
        }
        if snapshot.is_none() {
            if let Some(t) = tab {
                snapshot = Some(tools.read(t).await?);
            }
        }
        let mut output = String::new();
        if !notes.is_empty() {
            output.push_str(&format!("Actions: {}.\n", notes.join("; ")));
        }
        let final_url = snapshot.as_ref().map(|s| s.url.clone());
        if let Some(s) = &snapshot {
            output.push_str(&format!("Page {}:\n{}", s.url, s.text));
        }
        tools.close_all().await;
        Ok(AgentOutcome { output, final_url })
    }
}

const NODE_AGENT_SYSTEM: &str = "You are a browser agent executing one node of a workflow. \
Reply with exactly one JSON object per turn: \
{\"action\": \"open\"|\"click\"|\"fill\"|\"read\"|\"fetch\"|\"finish\", \"url\": string, \
\"target\": string, \"value\": string, \"output\": string}. \
Use only the tools listed for the node. Open a new tab for every site. \
Finish with the information the node is asked to output.";

#[derive(Debug, Deserialize)]
struct AgentTurn {
    action: String,
    #[serde(default)]
    url: Option<String>,
    #[serde(default)]
    target: Option<String>,
    #[serde(default)]
    value: Option<String>,
    #[serde(default)]
    output: Option<String>,
}

/// Tool-calling loop through the LLM gateway.
pub struct LlmNodeAgent {
    gateway: Gateway,
}

impl LlmNodeAgent {
    pub fn new(gateway: Gateway) -> Self {
        LlmNodeAgent { gateway }
    }
}

#[async_trait]
impl NodeAgent for LlmNodeAgent {
    async fn run(&self, task: &NodeTask, tools: &mut ToolBox) -> Result<AgentOutcome, AgentError> {
        let mut transcript: Vec<serde_json::Value> = Vec::new();
        let mut tab: Option<TabId> = None;
        let mut final_url = None;
        loop {
            let content = json!({
                "node": task.node.name,
                "prompt": task.node.prompt,
                "tools": task.node.tools,
                "ancestor_results": task.history(),
                "transcript": transcript,
            })
            .to_string();
            let request = self.gateway.request(NODE_AGENT_SYSTEM.to_string(), content);
            let turn: AgentTurn = self
                .gateway
                .complete_with_keys(&request, "node_action", &["action"], self.gateway.max_retries, |v| {
                    serde_json::from_value(v).map_err(|e| e.to_string())
                })
                .await
                .map_err(|e| AgentError::Contract(e.to_string()))?
                .value;
            let observation = match turn.action.as_str() {
                "finish" => {
                    tools.close_all().await;
                    return Ok(AgentOutcome {
                        output: turn.output.unwrap_or_default(),
                        final_url,
                    });
                }
                "open" => {
                    let url = turn.url.ok_or_else(|| AgentError::Contract("open needs url".into()))?;
                    tab = Some(tools.open(&absolute_url(&url)).await?);
                    json!({"opened": url})
                }
                "click" | "fill" | "read" => {
                    let t = tab.ok_or_else(|| AgentError::Contract("no tab is open".into()))?;
                    let target = turn.target.unwrap_or_default();
                    match turn.action.as_str() {
                        "click" => {
                            tools.click(t, &target).await?;
                            json!({"clicked": target})
                        }
                        "fill" => {
                            tools.fill(t, &target, &turn.value.unwrap_or_default()).await?;
                            json!({"filled": target})
                        }
                        _ => {
                            let page = tools.read(t).await?;
                            final_url = Some(page.url.clone());
                            serde_json::to_value(page).expect("serializes")
                        }
                    }
                }
                "fetch" => {
                    let url = turn.url.ok_or_else(|| AgentError::Contract("fetch needs url".into()))?;
                    json!({"fetched": tools.fetch(&url).await?})
                }
                other => return Err(AgentError::Contract(format!("unknown action `{other}`"))),
            };
            transcript.push(json!({"action": turn.action, "observation": observation}));
        }
    }
}
