//! Service configuration. Sources are layered: file, then environment,
//! then whatever the caller sets explicitly.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use demoflow_core::execution::cdp::CdpDriver;
use demoflow_core::execution::{
    BrowserDriver, DriverError, Limits, LlmNodeAgent, NodeAgent, ScriptedAgent, SessionStore, SimulatedDriver,
    StoreError,
};
use demoflow_core::llm::network::{NetworkBackend, NetworkConfig};
use demoflow_core::llm::{Gateway, DEFAULT_CONCURRENCY, DEFAULT_MAX_RETRIES};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ENV_BACKEND: &str = "DEMOFLOW_BACKEND";
pub const ENV_MODEL_ID: &str = "DEMOFLOW_MODEL_ID";
pub const ENV_CDP_ENDPOINT: &str = "DEMOFLOW_CDP_ENDPOINT";
pub const ENV_STORE_PATH: &str = "DEMOFLOW_STORE_PATH";
pub const DEFAULT_STORE_FILE: &str = "demoflow.db";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("invalid value for {key}: {value}")]
    Value { key: String, value: String },
    #[error("{0}")]
    Missing(String),
    #[error("backend: {0}")]
    Backend(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
    Network,
}

impl std::str::FromStr for BackendKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mock" => Ok(BackendKind::Mock),
            "network" => Ok(BackendKind::Network),
            _ => Err(ConfigError::Value {
                key: "backend".into(),
                value: s.into(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriverKind {
    #[default]
    Simulated,
    Cdp,
}

impl std::str::FromStr for DriverKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "simulated" => Ok(DriverKind::Simulated),
            "cdp" => Ok(DriverKind::Cdp),
            _ => Err(ConfigError::Value {
                key: "driver".into(),
                value: s.into(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: String,
    /// SQLite file for history and templates. Unset means the service
    /// default file, or an in-memory store for one-shot commands.
    pub store_path: Option<PathBuf>,
    pub backend: BackendKind,
    pub model_id: String,
    /// Base URL of a chat-completions endpoint.
    pub llm_endpoint: Option<String>,
    /// Name of the environment variable holding the API key.
    pub api_key_env: Option<String>,
    pub llm_timeout_secs: u64,
    pub max_retries: usize,
    pub concurrency: usize,
    pub driver: DriverKind,
    /// Page fixtures for the simulated driver (file or directory).
    pub fixtures: Option<PathBuf>,
    /// Simulated per-action latency.
    pub latency_ms: u64,
    /// DevTools endpoint. Point it at the user's own browser to run there;
    /// by default a separately launched browser is expected.
    pub cdp_endpoint: Option<String>,
    /// Quiescence required before a recording is regenerated.
    pub throttle_ms: u64,
    pub max_actions: usize,
    pub node_timeout_secs: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        let limits = Limits::default();
        ServiceConfig {
            listen: "127.0.0.1:8787".into(),
            store_path: None,
            backend: BackendKind::Mock,
            model_id: "mock".into(),
            llm_endpoint: None,
            api_key_env: None,
            llm_timeout_secs: 120,
            max_retries: DEFAULT_MAX_RETRIES,
            concurrency: DEFAULT_CONCURRENCY,
            driver: DriverKind::Simulated,
            fixtures: None,
            latency_ms: 0,
            cdp_endpoint: None,
            throttle_ms: 3000,
            max_actions: limits.max_actions,
            node_timeout_secs: limits.node_timeout.as_secs(),
        }
    }
}

impl ServiceConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Overrides fields from `DEMOFLOW_*` variables found through `lookup`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = lookup(ENV_BACKEND) {
            self.backend = v.parse()?;
        }
        if let Some(v) = lookup(ENV_MODEL_ID) {
            self.model_id = v;
        }
        if let Some(v) = lookup(ENV_CDP_ENDPOINT) {
            self.cdp_endpoint = Some(v);
        }
        if let Some(v) = lookup(ENV_STORE_PATH) {
            self.store_path = Some(PathBuf::from(v));
        }
        Ok(())
    }

    pub fn open_store(&self, fallback: Option<&Path>) -> Result<SessionStore, ConfigError> {
        let bad = |path: &Path, e: StoreError| ConfigError::Value {
            key: "store_path".into(),
            value: format!("{}: {e}", path.display()),
        };
        match self.store_path.as_deref().or(fallback) {
            Some(path) => SessionStore::open(path).map_err(|e| bad(path, e)),
            None => SessionStore::in_memory().map_err(|e| bad(Path::new(":memory:"), e)),
        }
    }

    pub fn limits(&self) -> Limits {
        Limits {
            max_actions: self.max_actions,
            node_timeout: Duration::from_secs(self.node_timeout_secs),
        }
    }

    pub fn gateway(&self) -> Result<Gateway, ConfigError> {
        let gateway = match self.backend {
            BackendKind::Mock => Gateway::mock(),
            BackendKind::Network => {
                let endpoint = self
                    .llm_endpoint
                    .clone()
                    .ok_or_else(|| ConfigError::Missing("network backend needs llm_endpoint".into()))?;
                let api_key = match &self.api_key_env {
                    Some(var) => Some(
                        std::env::var(var)
                            .map_err(|_| ConfigError::Missing(format!("environment variable {var} is not set")))?,
                    ),
                    None => None,
                };
                let backend = NetworkBackend::new(NetworkConfig {
                    endpoint,
                    api_key,
                    timeout: Duration::from_secs(self.llm_timeout_secs),
                })
                .map_err(|e| ConfigError::Backend(e.to_string()))?;
                Gateway::new(Arc::new(backend))
            }
        };
        Ok(gateway
            .with_model(self.model_id.clone())
            .with_max_retries(self.max_retries)
            .with_concurrency(self.concurrency))
    }

    /// The mock backend only speaks the pipeline contracts, so node agents
    /// follow prompt steps directly unless a network model is configured.
    pub fn agent(&self, gateway: &Gateway) -> Arc<dyn NodeAgent> {
        match self.backend {
            BackendKind::Mock => Arc::new(ScriptedAgent),
            BackendKind::Network => Arc::new(LlmNodeAgent::new(gateway.clone())),
        }
    }

    pub fn driver_source(&self) -> Result<DriverSource, ConfigError> {
        match self.driver {
            DriverKind::Simulated => {
                let path = self
                    .fixtures
                    .clone()
                    .ok_or_else(|| ConfigError::Missing("simulated driver needs fixtures".into()))?;
                Ok(DriverSource::Simulated {
                    path,
                    latency: Duration::from_millis(self.latency_ms),
                })
            }
            DriverKind::Cdp => self
                .cdp_endpoint
                .clone()
                .map(DriverSource::Cdp)
                .ok_or_else(|| ConfigError::Missing("cdp driver needs cdp_endpoint".into())),
        }
    }
}

type DriverFactory = dyn Fn() -> Arc<dyn BrowserDriver> + Send + Sync;

/// Where each execution gets its browser from.
#[derive(Clone)]
pub enum DriverSource {
    /// Fresh simulated environment per execution.
    Simulated { path: PathBuf, latency: Duration },
    Cdp(String),
    Custom(Arc<DriverFactory>),
}

impl std::fmt::Debug for DriverSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DriverSource::Simulated { path, latency } => {
                write!(f, "Simulated({}, {latency:?})", path.display())
            }
            DriverSource::Cdp(e) => write!(f, "Cdp({e})"),
            DriverSource::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl DriverSource {
    pub fn custom(f: impl Fn() -> Arc<dyn BrowserDriver> + Send + Sync + 'static) -> Self {
        DriverSource::Custom(Arc::new(f))
    }

    pub async fn connect(&self) -> Result<Arc<dyn BrowserDriver>, DriverError> {
        match self {
            DriverSource::Simulated { path, latency } => {
                let driver = SimulatedDriver::from_path(path)
                    .map_err(|e| DriverError::Disconnected(format!("fixtures {}: {e}", path.display())))?;
                Ok(Arc::new(driver.with_latency(*latency)))
            }
            DriverSource::Cdp(endpoint) => Ok(Arc::new(CdpDriver::connect(endpoint).await?)),
            DriverSource::Custom(f) => Ok(f()),
        }
    }
}
