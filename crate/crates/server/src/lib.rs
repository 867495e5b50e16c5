//! HTTP facade over the demoflow engine.
//!
//! Sessions move through `idle`, `recording`, `reviewing` and `executing`.
//! Raw events posted while recording are filtered and, after a quiet
//! interval, regenerated into a workflow. Edits use optimistic versioning.
//! Live updates are pushed over server-sent events named `workflow_diff`,
//! `node_status`, `phase` and `final_result`.

pub mod config;
pub mod error;
mod routes;
pub mod state;

use std::sync::Arc;

pub use config::{ConfigError, DriverSource, ServiceConfig};
pub use error::{ApiError, ErrorBody};
pub use routes::{
    router, AdaptReply, ExecutionReply, ExecutionStarted, IngestReply, TemplateRecord, WorkflowReply,
};
pub use state::{App, ExecStatus, FinalResult, Phase, PhaseChange, SessionState, StreamEvent, WorkflowDiff};

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: String,
        source: std::io::Error,
    },
    #[error("server: {0}")]
    Io(#[from] std::io::Error),
}

/// Runs the service until Ctrl-C.
pub async fn serve(config: &ServiceConfig) -> Result<(), ServeError> {
    let app = Arc::new(App::from_config(config)?);
    let listener = tokio::net::TcpListener::bind(&config.listen)
        .await
        .map_err(|source| ServeError::Bind {
            addr: config.listen.clone(),
            source,
        })?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
