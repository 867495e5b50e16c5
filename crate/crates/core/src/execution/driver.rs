use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Handle of one open tab.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TabId(pub u64);

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum DriverError {
    /// The action could not be performed (missing element, unknown page).
    #[error("{0}")]
    Action(String),
    /// The browser is gone; nothing further can run.
    #[error("driver disconnected: {0}")]
    Disconnected(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageTarget {
    pub descriptor: String,
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageSnapshot {
    pub url: String,
    pub text: String,
    #[serde(default)]
    pub targets: Vec<PageTarget>,
}

/// Browser capabilities, one per tool-vocabulary entry.
///
/// | tool            | method                |
/// |-----------------|-----------------------|
/// | `browser.open`  | [`open_tab`]          |
/// | `browser.click` | [`click`]             |
/// | `browser.fill`  | [`fill`]              |
/// | `browser.read`  | [`read_page`]         |
/// | `api.fetch`     | [`fetch`]             |
///
/// [`open_tab`]: BrowserDriver::open_tab
/// [`click`]: BrowserDriver::click
/// [`fill`]: BrowserDriver::fill
/// [`read_page`]: BrowserDriver::read_page
/// [`fetch`]: BrowserDriver::fetch
#[async_trait]
pub trait BrowserDriver: Send + Sync {
    async fn open_tab(&self, url: &str) -> Result<TabId, DriverError>;
    async fn click(&self, tab: TabId, descriptor: &str) -> Result<(), DriverError>;
    async fn fill(&self, tab: TabId, descriptor: &str, value: &str) -> Result<(), DriverError>;
    async fn read_page(&self, tab: TabId) -> Result<PageSnapshot, DriverError>;
    async fn fetch(&self, url: &str) -> Result<String, DriverError>;

    async fn close_tab(&self, _tab: TabId) -> Result<(), DriverError> {
        Ok(())
    }
}

/// Tool name to driver method, as recorded in bundle manifests.
pub const TOOL_BINDINGS: [(&str, &str); 5] = [
    ("browser.open", "open_tab"),
    ("browser.click", "click"),
    ("browser.fill", "fill"),
    ("api.fetch", "fetch"),
    ("browser.read", "read_page"),
];

/// `https://` is assumed when the target has no scheme.
pub fn absolute_url(target: &str) -> String {
    if target.contains("://") {
        target.to_string()
    } else {
        format!("https://{target}")
    }
}
