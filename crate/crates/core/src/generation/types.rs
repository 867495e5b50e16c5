use serde::{Deserialize, Serialize};

/// Output of the context agent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContextInfo {
    pub goal: String,
    pub interests: Vec<String>,
    pub constraints: Vec<String>,
    /// Literal values exactly as they appear in the log.
    pub values: Vec<String>,
    pub entities: Vec<String>,
}

impl ContextInfo {
    pub fn check(&self) -> Result<(), String> {
        if self.interests.len() > 3 {
            return Err(format!(
                "interests has {} entries, at most 3 allowed",
                self.interests.len()
            ));
        }
        Ok(())
    }
}

/// Output of the action agent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ActionInfo {
    pub actions: Vec<String>,
    pub sites: Vec<String>,
    pub phases: Vec<String>,
    pub confidence: f64,
    /// Structured trace backing `actions`; one entry per interaction.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub detailed_actions: Vec<DetailedAction>,
}

impl ActionInfo {
    pub fn check(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(format!("confidence {} outside [0, 1]", self.confidence));
        }
        if let Some(a) = self
            .detailed_actions
            .iter()
            .find(|a| a.phase >= self.phases.len().max(1))
        {
            return Err(format!("detailed action references unknown phase {}", a.phase));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetailedAction {
    /// Index into [`ActionInfo::phases`].
    pub phase: usize,
    pub site: String,
    /// One of `open`, `navigate`, `click`, `input`, `select`, `submit`.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
}
