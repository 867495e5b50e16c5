//! Thin chat-completions adapter (`POST {endpoint}/chat/completions`).

use std::time::Duration;

use async_trait::async_trait;
use serde::Deserialize;
use serde_json::json;

use super::{BackendError, LlmBackend, LlmRequest};

#[derive(Debug, Clone)]
pub struct NetworkConfig {
    pub endpoint: String,
    /// Bearer token; resolved by the caller from the configured credential
    /// reference.
    pub api_key: Option<String>,
    pub timeout: Duration,
}

pub struct NetworkBackend {
    config: NetworkConfig,
    client: reqwest::Client,
}

impl NetworkBackend {
    pub fn new(config: NetworkConfig) -> Result<Self, BackendError> {
        let client = reqwest::Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| BackendError::Fatal(e.to_string()))?;
        Ok(NetworkBackend { config, client })
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

#[async_trait]
impl LlmBackend for NetworkBackend {
    async fn complete(&self, request: &LlmRequest) -> Result<String, BackendError> {
        let url = format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'));
        let body = json!({
            "model": request.model_id,
            "temperature": request.temperature,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_content},
            ],
        });
        let mut call = self.client.post(&url).json(&body);
        if let Some(key) = &self.config.api_key {
            call = call.bearer_auth(key);
        }
        let response = call.send().await.map_err(|e| {
            if e.is_timeout() || e.is_connect() {
                BackendError::Transient(e.to_string())
            } else {
                BackendError::Fatal(e.to_string())
            }
        })?;
        let status = response.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(BackendError::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            let text = response.text().await.unwrap_or_default();
            return Err(BackendError::Fatal(format!("HTTP {status}: {text}")));
        }
        let parsed: ChatResponse = response
            .json()
            .await
            .map_err(|e| BackendError::Transient(format!("undecodable response: {e}")))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Transient("response without content".into()))
    }
}
