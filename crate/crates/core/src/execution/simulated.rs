//! In-process fake web built from page fixtures.
//!
//! A fixture file is a JSON map of URL to page:
//!
//! ```json
//! {"https://kayak.com/": {"text": "Search flights",
//!   "targets": [{"descriptor": "From", "kind": "fill"},
//!               {"descriptor": "Search", "kind": "click",
//!                "effect_url": "https://kayak.com/results"}]}}
//! ```
//!
//! Page text may reference values filled anywhere on the same site with
//! `{{descriptor}}`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::driver::{absolute_url, BrowserDriver, DriverError, PageSnapshot, PageTarget, TabId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetFixture {
    pub descriptor: String,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effect_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageFixture {
    pub text: String,
    #[serde(default)]
    pub targets: Vec<TargetFixture>,
}

/// `https://www.Kayak.com/a/` → `kayak.com/a`.
pub fn normalize_url(url: &str) -> String {
    let rest = url.split_once("://").map(|(_, r)| r).unwrap_or(url);
    let (host, path) = match rest.find(['/', '?', '#']) {
        Some(i) => (&rest[..i], &rest[i..]),
        None => (rest, ""),
    };
    let host = host.to_ascii_lowercase();
    let host = host.strip_prefix("www.").unwrap_or(&host);
    let path = path.split('#').next().unwrap_or("");
    let path = match path.split_once('?') {
        Some((p, q)) => format!("{}?{q}", p.trim_end_matches('/')),
        None => path.trim_end_matches('/').to_string(),
    };
    format!("{host}{path}")
}

fn host_of(normalized: &str) -> &str {
    normalized.split(['/', '?']).next().unwrap_or(normalized)
}

#[derive(Debug, Default)]
struct State {
    tabs: BTreeMap<TabId, String>,
    next_tab: u64,
    /// Filled values per site, keyed by lower-cased descriptor.
    filled: BTreeMap<String, BTreeMap<String, String>>,
    actions: usize,
    disconnected: bool,
}

pub struct SimulatedDriver {
    pages: BTreeMap<String, PageFixture>,
    latency: Duration,
    failing: BTreeSet<String>,
    disconnect_after: Option<usize>,
    state: Mutex<State>,
}

impl SimulatedDriver {
    pub fn new(pages: BTreeMap<String, PageFixture>) -> Self {
        SimulatedDriver {
            pages: pages.into_iter().map(|(k, v)| (normalize_url(&k), v)).collect(),
            latency: Duration::ZERO,
            failing: BTreeSet::new(),
            disconnect_after: None,
            state: Mutex::new(State::default()),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        Ok(SimulatedDriver::new(serde_json::from_str(text)?))
    }

    /// Loads and merges every `*.json` fixture in a directory (or one file).
    pub fn from_path(path: &Path) -> std::io::Result<Self> {
        let mut files = Vec::new();
        if path.is_dir() {
            for entry in std::fs::read_dir(path)? {
                let p = entry?.path();
                if p.extension().is_some_and(|e| e == "json") {
                    files.push(p);
                }
            }
            files.sort();
        } else {
            files.push(path.to_path_buf());
        }
        let mut pages = BTreeMap::new();
        for f in files {
            let text = std::fs::read_to_string(&f)?;
            let part: BTreeMap<String, PageFixture> = serde_json::from_str(&text)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", f.display())))?;
            pages.extend(part);
        }
        Ok(SimulatedDriver::new(pages))
    }

    /// Delay applied to open, click, fill and fetch. Reads are instant.
    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    /// Every action on this descriptor or URL fails.
    pub fn fail_on(mut self, target: impl Into<String>) -> Self {
        let t = target.into();
        let key = if t.contains('.') { normalize_url(&t) } else { t.to_lowercase() };
        self.failing.insert(key);
        self
    }

    /// The connection drops after `n` successful actions.
    pub fn disconnect_after(mut self, n: usize) -> Self {
        self.disconnect_after = Some(n);
        self
    }

    pub fn action_count(&self) -> usize {
        self.state.lock().unwrap().actions
    }

    fn begin(&self) -> Result<(), DriverError> {
        let mut s = self.state.lock().unwrap();
        if s.disconnected {
            return Err(DriverError::Disconnected("simulated browser closed".into()));
        }
        if self.disconnect_after.is_some_and(|n| s.actions >= n) {
            s.disconnected = true;
            return Err(DriverError::Disconnected("simulated browser closed".into()));
        }
        s.actions += 1;
        Ok(())
    }

    async fn delay(&self) {
        if !self.latency.is_zero() {
            tokio::time::sleep(self.latency).await;
        }
    }

    fn page(&self, key: &str) -> Result<&PageFixture, DriverError> {
        if self.failing.contains(key) {
            return Err(DriverError::Action(format!("page {key} failed to load")));
        }
        self.pages
            .get(key)
            .ok_or_else(|| DriverError::Action(format!("no page at {key}")))
    }

    fn tab_url(&self, tab: TabId) -> Result<String, DriverError> {
        self.state
            .lock()
            .unwrap()
            .tabs
            .get(&tab)
            .cloned()
            .ok_or_else(|| DriverError::Action(format!("unknown tab {}", tab.0)))
    }

    fn target<'a>(&self, page: &'a PageFixture, descriptor: &str, kinds: &[&str]) -> Result<&'a TargetFixture, DriverError> {
        let d = descriptor.to_lowercase();
        if self.failing.contains(&d) {
            return Err(DriverError::Action(format!("'{descriptor}' did not respond")));
        }
        let candidates = || page.targets.iter().filter(|t| kinds.contains(&t.kind.as_str()));
        candidates()
            .find(|t| t.descriptor.to_lowercase() == d)
            .or_else(|| candidates().find(|t| t.descriptor.to_lowercase().contains(&d)))
            .ok_or_else(|| DriverError::Action(format!("no element matching '{descriptor}'")))
    }

    fn render(&self, key: &str, page: &PageFixture) -> String {
        let s = self.state.lock().unwrap();
        let values = s.filled.get(host_of(key));
        let mut text = page.text.clone();
        while let Some(start) = text.find("{{") {
            let Some(len) = text[start..].find("}}") else { break };
            let name = text[start + 2..start + len].trim().to_lowercase();
            let value = values
                .and_then(|v| v.get(&name))
                .cloned()
                .unwrap_or_else(|| format!("(no {name})"));
            text.replace_range(start..start + len + 2, &value);
        }
        text
    }
}

#[async_trait]
impl BrowserDriver for SimulatedDriver {
    async fn open_tab(&self, url: &str) -> Result<TabId, DriverError> {
        self.begin()?;
        self.delay().await;
        let key = normalize_url(&absolute_url(url));
        self.page(&key)?;
        let mut s = self.state.lock().unwrap();
        s.next_tab += 1;
        let id = TabId(s.next_tab);
        s.tabs.insert(id, key);
        Ok(id)
    }

    async fn click(&self, tab: TabId, descriptor: &str) -> Result<(), DriverError> {
        self.begin()?;
        self.delay().await;
        let key = self.tab_url(tab)?;
        let page = self.page(&key)?;
        let target = self.target(page, descriptor, &["click", "link", "submit"])?;
        if let Some(next) = &target.effect_url {
            let next = normalize_url(next);
            self.page(&next)?;
            self.state.lock().unwrap().tabs.insert(tab, next);
        }
        Ok(())
    }

    async fn fill(&self, tab: TabId, descriptor: &str, value: &str) -> Result<(), DriverError> {
        self.begin()?;
        self.delay().await;
        let key = self.tab_url(tab)?;
        let page = self.page(&key)?;
        let target = self.target(page, descriptor, &["fill", "input"])?;
        let mut s = self.state.lock().unwrap();
        let site = s.filled.entry(host_of(&key).to_string()).or_default();
        site.insert(target.descriptor.to_lowercase(), value.to_string());
        site.insert(descriptor.to_lowercase(), value.to_string());
        Ok(())
    }

    async fn read_page(&self, tab: TabId) -> Result<PageSnapshot, DriverError> {
        self.begin()?;
        let key = self.tab_url(tab)?;
        let page = self.page(&key)?;
        Ok(PageSnapshot {
            url: format!("https://{key}"),
            text: self.render(&key, page),
            targets: page
                .targets
                .iter()
                .map(|t| PageTarget {
                    descriptor: t.descriptor.clone(),
                    kind: t.kind.clone(),
                })
                .collect(),
        })
    }

    async fn fetch(&self, url: &str) -> Result<String, DriverError> {
        self.begin()?;
        self.delay().await;
        let key = normalize_url(&absolute_url(url));
        let page = self.page(&key)?;
        Ok(self.render(&key, page))
    }

    async fn close_tab(&self, tab: TabId) -> Result<(), DriverError> {
        self.state.lock().unwrap().tabs.remove(&tab);
        Ok(())
    }
}
