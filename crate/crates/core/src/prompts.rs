//! Versioned agent prompt assets with named `{slot}` placeholders.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: &'static str,
    pub version: u32,
    pub text: &'static str,
}

pub const CONTEXT_ANALYSIS: PromptTemplate = PromptTemplate {
    name: "context_analysis",
    version: 1,
    text: include_str!("../prompts/context_analysis.v1.txt"),
};

pub const ACTION_ANALYSIS: PromptTemplate = PromptTemplate {
    name: "action_analysis",
    version: 1,
    text: include_str!("../prompts/action_analysis.v1.txt"),
};

pub const WORKFLOW_SYNTHESIS: PromptTemplate = PromptTemplate {
    name: "workflow_synthesis",
    version: 1,
    text: include_str!("../prompts/workflow_synthesis.v1.txt"),
};

pub const IDENTIFIER: PromptTemplate = PromptTemplate {
    name: "identifier",
    version: 1,
    text: include_str!("../prompts/identifier.v1.txt"),
};

pub const FILLER: PromptTemplate = PromptTemplate {
    name: "filler",
    version: 1,
    text: include_str!("../prompts/filler.v1.txt"),
};

pub const ALL: [PromptTemplate; 5] = [
    CONTEXT_ANALYSIS,
    ACTION_ANALYSIS,
    WORKFLOW_SYNTHESIS,
    IDENTIFIER,
    FILLER,
];

impl PromptTemplate {
    /// Slot names in order of first appearance.
    pub fn slots(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let mut rest = self.text;
        while let Some(start) = rest.find('{') {
            let after = &rest[start + 1..];
            match after.find('}') {
                Some(end)
                    if end > 0
                        && after[..end]
                            .bytes()
                            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_') =>
                {
                    let slot = &after[..end];
                    if !out.contains(&slot) {
                        out.push(slot);
                    }
                    rest = &after[end + 1..];
                }
                _ => rest = after,
            }
        }
        out
    }

    /// Substitutes each `{slot}`. Unknown slots are left untouched.
    pub fn render(&self, values: &[(&str, &str)]) -> String {
        let mut text = self.text.to_string();
        for (slot, value) in values {
            text = text.replace(&format!("{{{slot}}}"), value);
        }
        text
    }

    /// First line; the mock backend dispatches on it.
    pub fn preamble(&self) -> &'static str {
        self.text.lines().next().unwrap_or_default()
    }
}
