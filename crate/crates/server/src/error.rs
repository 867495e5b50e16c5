use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use demoflow_core::execution::StoreError;
use demoflow_core::generalization::GeneralizationError;
use demoflow_core::generation::GenerationError;
use demoflow_core::llm::LlmError;
use demoflow_core::workflow::EditError;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub stage: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
                stage: None,
                details: None,
            },
        }
    }

    pub fn stage(mut self, stage: impl ToString) -> Self {
        self.body.stage = Some(stage.to_string());
        self
    }

    pub fn details(mut self, details: impl Serialize) -> Self {
        self.body.details = serde_json::to_value(details).ok();
        self
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("unknown {what} `{id}`"))
    }

    pub fn conflict(code: &str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::CONFLICT, code, message)
    }

    pub fn unprocessable(code: &str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "store_failure", e.to_string()).stage("store")
    }
}

fn llm_status(e: &LlmError) -> (StatusCode, &'static str) {
    match e {
        LlmError::Backend(_) => (StatusCode::BAD_GATEWAY, "backend_failure"),
        LlmError::InvalidRequest(_) => (StatusCode::INTERNAL_SERVER_ERROR, "invalid_request"),
        LlmError::Extraction { .. } | LlmError::ContractViolation { .. } => {
            (StatusCode::BAD_GATEWAY, "contract_violation")
        }
    }
}

impl From<GenerationError> for ApiError {
    fn from(e: GenerationError) -> Self {
        let stage = e.stage();
        let (status, code) = match &e {
            GenerationError::EmptyLog => (StatusCode::UNPROCESSABLE_ENTITY, "empty_log"),
            GenerationError::Capture(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_event"),
            GenerationError::Agent { source, .. } => llm_status(source),
            GenerationError::SynthesisFailed { .. } => (StatusCode::BAD_GATEWAY, "synthesis_failed"),
        };
        ApiError::new(status, code, e.to_string()).stage(stage)
    }
}

impl From<GeneralizationError> for ApiError {
    fn from(e: GeneralizationError) -> Self {
        let stage = e.stage();
        let err = match &e {
            GeneralizationError::InvalidWorkflow(report) => {
                ApiError::unprocessable("invalid_workflow", e.to_string()).details(report)
            }
            GeneralizationError::Llm { source, .. } => {
                let (status, code) = llm_status(source);
                ApiError::new(status, code, e.to_string())
            }
            GeneralizationError::Unfilled(names) => {
                ApiError::new(StatusCode::BAD_GATEWAY, "unfilled_placeholders", e.to_string()).details(names)
            }
            GeneralizationError::Inconsistent(_) | GeneralizationError::Instantiation(_) => {
                ApiError::new(StatusCode::BAD_GATEWAY, "adaptation_failed", e.to_string())
            }
        };
        err.stage(stage)
    }
}

impl From<EditError> for ApiError {
    fn from(e: EditError) -> Self {
        let err = match &e {
            EditError::UnknownNode(_) => ApiError::unprocessable("unknown_node", e.to_string()),
            EditError::DuplicateNode(_) => ApiError::unprocessable("duplicate_node", e.to_string()),
            EditError::MissingEdge(_) => ApiError::unprocessable("missing_edge", e.to_string()),
            EditError::Invalid(_) => ApiError::unprocessable("invalid_edit", e.to_string()),
            EditError::InvalidBase(r) | EditError::Rejected(r) => {
                ApiError::unprocessable("edit_rejected", e.to_string()).details(r)
            }
        };
        err.stage("edit")
    }
}
