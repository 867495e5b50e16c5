use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;

use super::analysis::is_search_label;
use crate::generalization::placeholder::{abstract_literals, is_placeholder_name, upper_snake, workflow_tokens};
use crate::generalization::SemanticVariable;
use crate::workflow::Workflow;

/// Literals shorter than this stay in place; they collide with step
/// numbering and ordinary words.
const MIN_LITERAL_CHARS: usize = 3;

struct Candidate {
    literal: String,
    base: String,
    description: String,
}

fn shape(value: &str) -> (&'static str, &'static str) {
    static DATE: OnceLock<Regex> = OnceLock::new();
    static EMAIL: OnceLock<Regex> = OnceLock::new();
    static NUMBER: OnceLock<Regex> = OnceLock::new();
    let date = DATE.get_or_init(|| Regex::new(r"^(\d{4}-\d{2}-\d{2}|\d{1,2}/\d{1,2}/\d{2,4})$").unwrap());
    let email = EMAIL.get_or_init(|| Regex::new(r"^[^@\s]+@[^@\s]+\.[^@\s]+$").unwrap());
    let number = NUMBER.get_or_init(|| Regex::new(r"^[+-]?\d+([.,]\d+)?$").unwrap());
    if date.is_match(value) {
        ("DATE_VALUE", "date used in the task")
    } else if email.is_match(value) {
        ("EMAIL_ADDRESS", "email address used in the task")
    } else if value.contains("://") {
        ("URL_VALUE", "web address used in the task")
    } else if number.is_match(value) {
        ("NUMBER_VALUE", "number used in the task")
    } else {
        ("TEXT_VALUE", "text used in the task")
    }
}

fn candidates(w: &Workflow) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = Vec::new();
    let mut seen = BTreeSet::new();
    for value in &w.context_info.values {
        if value.chars().count() < MIN_LITERAL_CHARS || is_placeholder_name(value) || !seen.insert(value.clone()) {
            continue;
        }
        let source = w
            .action_info
            .detailed_actions
            .iter()
            .find(|a| a.value.as_deref() == Some(value.as_str()));
        let (base, description) = match source {
            Some(a) if a.kind == "input" => {
                let label = a.field.clone().or_else(|| a.field_name.clone());
                let searchy = a.field.as_deref().is_some_and(is_search_label)
                    || a.field_name.as_deref().is_some_and(is_search_label);
                match (searchy, a.field_name.as_deref().or(a.field.as_deref())) {
                    (true, _) => (
                        "SEARCH_TERM".to_string(),
                        format!("search query typed into the '{}' field", label.unwrap_or_default()),
                    ),
                    (false, Some(key)) if !upper_snake(key).is_empty() => {
                        let stem = upper_snake(key);
                        let base = if stem.ends_with("_VALUE") { stem } else { format!("{stem}_VALUE") };
                        let mut description = format!("value entered into the '{}' field", label.unwrap_or_default());
                        if let (Some(f), Some(n)) = (&a.field, &a.field_name) {
                            if f != n {
                                description.push_str(&format!(" ({})", n.replace('_', " ")));
                            }
                        }
                        (base, description)
                    }
                    _ => {
                        let (b, d) = shape(value);
                        (b.to_string(), d.to_string())
                    }
                }
            }
            Some(a) if a.kind == "select" => ("SELECTED_TEXT".to_string(), "text selected on a page".to_string()),
            _ => {
                let (b, d) = shape(value);
                (b.to_string(), d.to_string())
            }
        };
        out.push(Candidate {
            literal: value.clone(),
            base,
            description,
        });
    }
    let domains = w
        .action_info
        .sites
        .iter()
        .chain(w.context_info.entities.iter().filter(|e| e.contains('.') && !e.contains(' ')));
    for d in domains {
        if d.chars().count() < MIN_LITERAL_CHARS || !seen.insert(d.clone()) {
            continue;
        }
        out.push(Candidate {
            literal: d.clone(),
            base: "WEBSITE_DOMAIN".to_string(),
            description: "website domain the task runs on".to_string(),
        });
    }
    out
}

/// Abstracts context values and visited domains found in node names and
/// prompts, and records the placeholder ledger.
pub fn semanticize(w: &Workflow) -> Workflow {
    let reserved = workflow_tokens(w);
    let mut taken: BTreeSet<String> = BTreeSet::new();
    let mut pairs: Vec<(String, String)> = Vec::new();
    let mut info: BTreeMap<String, (String, String)> = BTreeMap::new();
    for c in candidates(w) {
        let mut name = c.base.clone();
        let mut n = 2;
        while taken.contains(&name) || reserved.contains(&name) {
            name = format!("{}_{n}", c.base);
            n += 1;
        }
        taken.insert(name.clone());
        info.insert(name.clone(), (c.literal.clone(), c.description));
        pairs.push((c.literal, name));
    }

    let mut out = w.clone();
    let mut paths: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut rename: BTreeMap<String, String> = BTreeMap::new();
    for node in &mut out.nodes {
        let (name, name_hits) = abstract_literals(&node.name, &pairs);
        let (prompt, prompt_hits) = abstract_literals(&node.prompt, &pairs);
        for r in name_hits {
            paths.entry(r.placeholder).or_default().push(format!("nodes[{name}].name"));
        }
        for r in prompt_hits {
            paths
                .entry(r.placeholder)
                .or_default()
                .push(format!("nodes[{name}].prompt#{}", r.occurrence));
        }
        if name != node.name {
            rename.insert(node.name.clone(), name.clone());
        }
        node.name = name;
        node.prompt = prompt;
    }
    for node in &mut out.nodes {
        for link in node.parent.iter_mut().chain(node.children.iter_mut()) {
            if let Some(new) = rename.get(link) {
                *link = new.clone();
            }
        }
    }

    let ledger = pairs
        .iter()
        .filter_map(|(_, placeholder)| {
            let p = paths.remove(placeholder)?;
            let (literal, description) = info.remove(placeholder)?;
            Some(SemanticVariable {
                placeholder: placeholder.clone(),
                semantic_description: description,
                paths: p,
                example_values: vec![literal],
            })
        })
        .collect();
    out.semantic_variables = Some(ledger);
    out.fill_notes = None;
    out
}
