//! Placeholder token scanning and boundary-aware literal substitution.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;

use crate::workflow::Workflow;

/// Minimum placeholder length; shorter upper-case words ("US", "NYC") are
/// ordinary text.
pub const MIN_PLACEHOLDER_LEN: usize = 4;

pub fn token_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b[A-Z][A-Z0-9_]{3,}\b").unwrap())
}

pub fn is_placeholder_name(s: &str) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^[A-Z][A-Z0-9_]*$").unwrap())
        .is_match(s)
        && s.len() >= MIN_PLACEHOLDER_LEN
}

pub fn tokens_in(text: &str) -> BTreeSet<String> {
    token_re()
        .find_iter(text)
        .map(|m| m.as_str().to_string())
        .collect()
}

/// Placeholder-shaped tokens in node names and prompts.
pub fn workflow_tokens(w: &Workflow) -> BTreeSet<String> {
    w.nodes
        .iter()
        .flat_map(|n| tokens_in(&n.name).into_iter().chain(tokens_in(&n.prompt)))
        .collect()
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn bounded(text: &str, start: usize, end: usize) -> bool {
    let before = text[..start].chars().next_back();
    let after = text[end..].chars().next();
    !before.is_some_and(is_word) && !after.is_some_and(is_word)
}

/// One literal replaced by one placeholder inside a text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Replacement {
    pub placeholder: String,
    /// Occurrence index of this placeholder within the text.
    pub occurrence: usize,
}

/// Replaces word-delimited occurrences of each literal with its
/// placeholder in a single left-to-right pass.
///
/// At each position the shortest matching literal wins, so a longer literal
/// that embeds a shorter one ("iPhone 17 Pro reviews") keeps its extra words
/// as plain text around the shorter placeholder.
pub fn abstract_literals(text: &str, literals: &[(String, String)]) -> (String, Vec<Replacement>) {
    let mut ordered: Vec<&(String, String)> = literals.iter().filter(|(l, _)| !l.is_empty()).collect();
    ordered.sort_by(|a, b| a.0.len().cmp(&b.0.len()).then_with(|| a.0.cmp(&b.0)));

    let mut out = String::with_capacity(text.len());
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    let mut replaced = Vec::new();
    let mut i = 0;
    while i < text.len() {
        let hit = ordered.iter().find(|(lit, _)| {
            text[i..].starts_with(lit.as_str()) && bounded(text, i, i + lit.len())
        });
        match hit {
            Some((lit, placeholder)) => {
                let n = counts.entry(placeholder.as_str()).or_default();
                replaced.push(Replacement {
                    placeholder: placeholder.clone(),
                    occurrence: *n,
                });
                *n += 1;
                out.push_str(placeholder);
                i += lit.len();
            }
            None => {
                let c = text[i..].chars().next().expect("in bounds");
                out.push(c);
                i += c.len_utf8();
            }
        }
    }
    (out, replaced)
}

/// Replaces placeholder tokens present in `values`; other tokens stay.
pub fn fill_placeholders(text: &str, values: &BTreeMap<String, String>) -> String {
    token_re()
        .replace_all(text, |caps: &regex::Captures| {
            let token = &caps[0];
            values.get(token).cloned().unwrap_or_else(|| token.to_string())
        })
        .into_owned()
}

/// Upper snake case of arbitrary text, e.g. `depart date` → `DEPART_DATE`.
pub fn upper_snake(text: &str) -> String {
    let mut out = String::new();
    for c in text.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_uppercase());
        } else if !out.ends_with('_') && !out.is_empty() {
            out.push('_');
        }
    }
    let trimmed = out.trim_end_matches('_').to_string();
    match trimmed.chars().next() {
        Some(c) if c.is_ascii_digit() => format!("FIELD_{trimmed}"),
        _ => trimmed,
    }
}
