//! Portable execution bundle: a zip with `workflow.json` and
//! `manifest.json`. Entries carry fixed timestamps so equal workflows give
//! equal bytes.

use std::collections::BTreeMap;
use std::io::{Cursor, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, ZipArchive, ZipWriter};

use super::driver::TOOL_BINDINGS;
use super::{plan, ExecutionPlan, Limits, PlanError};
use crate::workflow::{Workflow, TOOL_VOCABULARY};

pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: String,
    pub plan: ExecutionPlan,
    pub tools_used: Vec<String>,
    pub limits: Limits,
    pub tool_bindings: BTreeMap<String, String>,
    pub config_defaults: BTreeMap<String, String>,
}

#[derive(Debug, Error)]
pub enum BundleError {
    #[error(transparent)]
    Invalid(#[from] PlanError),
    #[error("bundle archive: {0}")]
    Zip(#[from] zip::result::ZipError),
    #[error("bundle io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bundle json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported bundle format version `{0}`")]
    Version(String),
    #[error("manifest plan does not match the workflow")]
    PlanMismatch,
}

pub fn manifest_for(w: &Workflow, limits: Limits) -> Result<Manifest, PlanError> {
    let plan = plan(w)?;
    let tools_used = TOOL_VOCABULARY
        .iter()
        .filter(|t| w.nodes.iter().any(|n| n.tools.iter().any(|x| x == *t)))
        .map(|t| t.to_string())
        .collect::<Vec<_>>();
    let tool_bindings = TOOL_BINDINGS
        .iter()
        .filter(|(t, _)| tools_used.iter().any(|u| u == t))
        .map(|(t, m)| (t.to_string(), m.to_string()))
        .collect();
    let config_defaults = [("backend", "mock"), ("driver", "simulated")]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    Ok(Manifest {
        format_version: FORMAT_VERSION.to_string(),
        plan,
        tools_used,
        limits,
        tool_bindings,
        config_defaults,
    })
}

pub fn export_bundle(w: &Workflow) -> Result<Vec<u8>, BundleError> {
    let manifest = manifest_for(w, Limits::default())?;
    let options = SimpleFileOptions::default()
        .compression_method(CompressionMethod::Deflated)
        .last_modified_time(zip::DateTime::default())
        .unix_permissions(0o644);
    let mut zip = ZipWriter::new(Cursor::new(Vec::new()));
    zip.start_file("workflow.json", options)?;
    zip.write_all(w.to_json().as_bytes())?;
    zip.start_file("manifest.json", options)?;
    zip.write_all(serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(zip.finish()?.into_inner())
}

#[derive(Debug, Clone)]
pub struct Imported {
    pub workflow: Workflow,
    /// `workflow.json` exactly as stored.
    pub workflow_json: String,
    pub manifest: Manifest,
}

pub fn import_bundle(bytes: &[u8]) -> Result<Imported, BundleError> {
    let mut archive = ZipArchive::new(Cursor::new(bytes))?;
    let mut read = |name: &str| -> Result<String, BundleError> {
        let mut s = String::new();
        archive.by_name(name)?.read_to_string(&mut s)?;
        Ok(s)
    };
    let workflow_json = read("workflow.json")?;
    let manifest: Manifest = serde_json::from_str(&read("manifest.json")?)?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(BundleError::Version(manifest.format_version));
    }
    let workflow = Workflow::from_json(&workflow_json)?;
    if plan(&workflow)?.levels != manifest.plan.levels {
        return Err(BundleError::PlanMismatch);
    }
    Ok(Imported {
        workflow,
        workflow_json,
        manifest,
    })
}
