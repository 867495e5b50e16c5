//! Demonstration-driven workflow engine.
//!
//! A recorded browser demonstration flows through four stages:
//!
//! 1. [`capture`] filters and debounces raw interaction events into a
//!    [`capture::DemoLog`] and renders it as log text.
//! 2. [`generation`] runs the context/action/synthesis agents over that text
//!    and produces a task-level [`workflow::Workflow`] DAG.
//! 3. [`generalization`] abstracts task-specific literals into placeholders
//!    and re-fills them from a natural-language instruction.
//! 4. [`execution`] levels the DAG, runs same-level node agents concurrently
//!    against a [`execution::driver::BrowserDriver`] and records every result
//!    in a persistent session history.
//!
//! All LLM traffic goes through [`llm::Gateway`], which enforces the
//! JSON-only output contract. [`llm::mock::MockBackend`] makes the whole
//! pipeline hermetic and deterministic.

pub mod capture;
pub mod execution;
pub mod generalization;
pub mod generation;
pub mod llm;
pub mod prompts;
pub mod workflow;

pub use capture::{DemoEvent, DemoLog, ElementMeta, EventKind, RawEvent};
pub use workflow::{ValidationReport, Workflow, WorkflowEdit, WorkflowNode};
