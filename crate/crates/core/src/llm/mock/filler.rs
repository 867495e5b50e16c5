use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;
use serde_json::Value;

use crate::generalization::placeholder::{abstract_literals, fill_placeholders};
use crate::generalization::{FillNote, FillSource, SemanticVariable};
use crate::workflow::steps::{parse_steps, render_general, replace_steps, site_stem};
use crate::workflow::Workflow;

/// What the instruction asks for.
#[derive(Debug, Default, PartialEq, Eq)]
pub struct Instruction {
    pub assign: BTreeMap<String, String>,
    pub open: BTreeSet<String>,
    pub keep_original: bool,
}

fn re(cell: &'static OnceLock<Regex>, pattern: &str) -> &'static Regex {
    cell.get_or_init(|| Regex::new(pattern).unwrap())
}

const CLAUSE_VERBS: [&str; 6] = ["replace", "change", "use", "set", "leave", "keep"];

fn clauses(text: &str) -> Vec<String> {
    static SPLIT: OnceLock<Regex> = OnceLock::new();
    let mut out = Vec::new();
    for part in re(&SPLIT, r";|\.\s+|,\s+").split(text) {
        let words: Vec<&str> = part.split_whitespace().collect();
        let mut current: Vec<&str> = Vec::new();
        for (i, w) in words.iter().enumerate() {
            let next = words.get(i + 1).map(|n| n.to_ascii_lowercase());
            if w.eq_ignore_ascii_case("and")
                && !current.is_empty()
                && next.as_deref().is_some_and(|n| CLAUSE_VERBS.contains(&n))
            {
                out.push(current.join(" "));
                current.clear();
                continue;
            }
            current.push(w);
        }
        if !current.is_empty() {
            out.push(current.join(" "));
        }
    }
    out.into_iter()
        .map(|c| c.trim().trim_end_matches(['.', '!']).to_string())
        .filter(|c| !c.is_empty())
        .collect()
}

fn clean(phrase: &str) -> String {
    let p = phrase
        .trim()
        .trim_end_matches(['.', '!', '?', ','])
        .trim_matches(['\'', '"', '`'])
        .trim();
    let lower = p.to_ascii_lowercase();
    for article in ["the ", "a ", "an "] {
        if lower.starts_with(article) {
            return p[article.len()..].trim().to_string();
        }
    }
    p.to_string()
}

/// The new value inside a phrase like "now search for Huawei Mate 60 Pro".
fn new_phrase(left: &str) -> String {
    static QUOTED: OnceLock<Regex> = OnceLock::new();
    static PREP: OnceLock<Regex> = OnceLock::new();
    let left = left.trim();
    if let Some(c) = re(&QUOTED, r#"['"]([^'"]+)['"]"#).captures_iter(left).last() {
        return clean(&c[1]);
    }
    if let Some(m) = re(
        &PREP,
        r"(?i)\b(for|to|in|on|at|with|from|about|into|use|using|try|buy|book|visit)\s+",
    )
    .find_iter(left)
    .last()
    {
        let rest = clean(&left[m.end()..]);
        if !rest.is_empty() {
            return rest;
        }
    }
    let words: Vec<&str> = left.split_whitespace().collect();
    let run = words
        .iter()
        .rev()
        .take_while(|w| w.chars().next().is_some_and(|c| c.is_uppercase() || c.is_ascii_digit()))
        .count();
    if run > 0 {
        return clean(&words[words.len() - run..].join(" "));
    }
    clean(left)
}

const STOP_WORDS: [&str; 8] = ["the", "value", "field", "into", "entered", "used", "task", "typed"];

fn role_words(v: &SemanticVariable) -> BTreeSet<String> {
    let mut words: BTreeSet<String> = v
        .placeholder
        .split('_')
        .map(|w| w.to_ascii_lowercase())
        .chain(
            v.semantic_description
                .split(|c: char| !c.is_alphanumeric())
                .map(|w| w.to_ascii_lowercase()),
        )
        .filter(|w| w.len() >= 3 && !STOP_WORDS.contains(&w.as_str()))
        .collect();
    if v.placeholder.starts_with("WEBSITE") {
        words.extend(["site", "website", "domain"].map(String::from));
    }
    if v.placeholder.starts_with("SEARCH") {
        words.extend(["query", "search", "term", "product"].map(String::from));
    }
    words
}

/// First placeholder whose name or description mentions one of `roles`.
fn by_role(vars: &[SemanticVariable], roles: &[&str]) -> Option<String> {
    let words = |v: &SemanticVariable| -> BTreeSet<String> {
        v.placeholder
            .split('_')
            .chain(v.semantic_description.split(|c: char| !c.is_alphanumeric()))
            .map(|w| w.to_ascii_lowercase())
            .collect()
    };
    roles
        .iter()
        .find_map(|r| vars.iter().find(|v| words(v).contains(*r)))
        .map(|v| v.placeholder.clone())
}

/// Placeholder a phrase refers to, by example value, name, or role words.
fn resolve(phrase: &str, vars: &[SemanticVariable]) -> Option<String> {
    let p = clean(phrase);
    if p.is_empty() {
        return None;
    }
    let lower = p.to_lowercase();
    let example = |v: &SemanticVariable| v.example_values.first().map(|e| e.to_lowercase()).unwrap_or_default();
    if let Some(v) = vars.iter().find(|v| example(v) == lower) {
        return Some(v.placeholder.clone());
    }
    let upper = p.to_uppercase().replace(' ', "_");
    if let Some(v) = vars.iter().find(|v| upper.contains(&v.placeholder)) {
        return Some(v.placeholder.clone());
    }
    if let Some(v) = vars
        .iter()
        .filter(|v| example(v).contains(&lower))
        .min_by_key(|v| example(v).len())
    {
        return Some(v.placeholder.clone());
    }
    if let Some(v) = vars
        .iter()
        .filter(|v| !example(v).is_empty() && lower.contains(&example(v)))
        .max_by_key(|v| example(v).len())
    {
        return Some(v.placeholder.clone());
    }
    let words: BTreeSet<String> = lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.len() >= 3)
        .map(String::from)
        .collect();
    let mut scored: Vec<(usize, &SemanticVariable)> = vars
        .iter()
        .map(|v| (role_words(v).intersection(&words).count(), v))
        .filter(|(s, _)| *s > 0)
        .collect();
    scored.sort_by(|a, b| b.0.cmp(&a.0));
    match scored.as_slice() {
        [(best, v), rest @ ..] if rest.first().is_none_or(|(s, _)| s < best) => Some(v.placeholder.clone()),
        _ => None,
    }
}

pub fn parse_instruction(text: &str, vars: &[SemanticVariable]) -> Instruction {
    static KEEP: OnceLock<Regex> = OnceLock::new();
    static OPEN: OnceLock<Regex> = OnceLock::new();
    static INSTEAD: OnceLock<Regex> = OnceLock::new();
    static REPLACE: OnceLock<Regex> = OnceLock::new();
    static CHANGE: OnceLock<Regex> = OnceLock::new();
    static USE: OnceLock<Regex> = OnceLock::new();
    static ROUTE: OnceLock<Regex> = OnceLock::new();
    let mut out = Instruction::default();
    let mut bare: Vec<String> = Vec::new();
    for clause in clauses(text) {
        if re(
            &KEEP,
            r"(?i)\b(change nothing|keep (everything|all)|original values?|same values|as demonstrated|no changes?)\b",
        )
        .is_match(&clause)
        {
            out.keep_original = true;
        } else if let Some(c) = re(&OPEN, r"(?i)\bleave (.+?) (open|blank|unspecified|unfilled|empty)\b").captures(&clause) {
            if let Some(p) = resolve(&c[1], vars) {
                out.open.insert(p);
            }
        } else if let Some(c) = re(&INSTEAD, r"(?i)^(.*)\binstead of\b(.*)$").captures(&clause) {
            let new = new_phrase(&c[1]);
            if let Some(p) = resolve(&c[2], vars) {
                if !new.is_empty() {
                    out.assign.insert(p, new);
                }
            }
        } else if let Some(c) = re(&REPLACE, r"(?i)\breplace (.+?) with (.+)$").captures(&clause) {
            if let Some(p) = resolve(&c[1], vars) {
                out.assign.insert(p, clean(&c[2]));
            }
        } else if let Some(c) = re(&CHANGE, r"(?i)\b(?:change|set) (.+?) to (.+)$").captures(&clause) {
            if let Some(p) = resolve(&c[1], vars) {
                out.assign.insert(p, clean(&c[2]));
            }
        } else if let Some(c) = re(&USE, r"(?i)\buse (.+?) (?:as|for) (.+)$").captures(&clause) {
            if let Some(p) = resolve(&c[2], vars) {
                out.assign.insert(p, clean(&c[1]));
            }
        } else if let Some(c) = re(
            &ROUTE,
            r"(?i)\bfrom (.+?) to (.+?)(?: on (\S+))?(?: instead)?[.!]?$",
        )
        .captures(&clause)
        {
            let legs = [
                (c.get(1), &["origin", "from", "departure", "source"][..]),
                (c.get(2), &["destination", "to", "arrival", "target"][..]),
                (c.get(3), &["date", "day", "depart"][..]),
            ];
            let before = out.assign.len();
            for (value, roles) in legs {
                if let (Some(value), Some(p)) = (value, by_role(vars, roles)) {
                    out.assign.insert(p, clean(value.as_str()));
                }
            }
            if out.assign.len() == before {
                bare.push(clause);
            }
        } else {
            bare.push(clause);
        }
    }
    if out.assign.is_empty() && out.open.is_empty() && !out.keep_original {
        if let (Some(clause), Some(search)) = (
            bare.first(),
            vars.iter().find(|v| v.placeholder.starts_with("SEARCH_TERM")),
        ) {
            let new = new_phrase(clause);
            if !new.is_empty() {
                out.assign.insert(search.placeholder.clone(), new);
            }
        }
    }
    out
}

fn map_strings(value: &mut Value, f: &dyn Fn(&str) -> String) {
    match value {
        Value::String(s) => *s = f(s),
        Value::Array(items) => items.iter_mut().for_each(|v| map_strings(v, f)),
        Value::Object(map) => map.values_mut().for_each(|v| map_strings(v, f)),
        _ => {}
    }
}

/// Instantiates every placeholder: instruction values first, then values
/// derived from them, then the demonstrated example.
pub fn fill(sw: &Workflow, instruction: &str) -> Workflow {
    let vars = sw.semantic_variables.clone().unwrap_or_default();
    let parsed = parse_instruction(instruction, &vars);
    let example = |v: &SemanticVariable| v.example_values.first().cloned().unwrap_or_default();

    let mut values: BTreeMap<String, String> = BTreeMap::new();
    let mut notes = Vec::new();
    for v in &vars {
        if parsed.open.contains(&v.placeholder) {
            notes.push(FillNote {
                placeholder: v.placeholder.clone(),
                decision: "left open as requested".into(),
                source: FillSource::UserInstruction,
            });
        } else if let Some(new) = parsed.assign.get(&v.placeholder) {
            values.insert(v.placeholder.clone(), new.clone());
        }
    }
    // values that embed a replaced literal follow the replacement
    let replaced: Vec<(String, String)> = vars
        .iter()
        .filter_map(|v| Some((example(v), values.get(&v.placeholder)?.clone())))
        .filter(|(old, new)| old != new)
        .collect();
    for v in &vars {
        if values.contains_key(&v.placeholder) || parsed.open.contains(&v.placeholder) {
            continue;
        }
        let original = example(v);
        if parsed.keep_original {
            values.insert(v.placeholder.clone(), original);
            continue;
        }
        let (derived, hits) = abstract_literals(&original, &replaced);
        if !hits.is_empty() {
            notes.push(FillNote {
                placeholder: v.placeholder.clone(),
                decision: format!("derived '{derived}' from the instruction"),
                source: FillSource::InferredDefault,
            });
            values.insert(v.placeholder.clone(), derived);
        } else {
            notes.push(FillNote {
                placeholder: v.placeholder.clone(),
                decision: format!("kept demonstrated value '{original}'"),
                source: FillSource::InferredDefault,
            });
            values.insert(v.placeholder.clone(), original);
        }
    }

    let mut out = sw.clone();
    for node in &mut out.nodes {
        let steps = parse_steps(&node.prompt);
        if !steps.is_empty() {
            node.prompt = replace_steps(&node.prompt, &render_general(&steps));
        }
        node.prompt = fill_placeholders(&node.prompt, &values);
        node.name = fill_placeholders(&node.name, &values);
    }

    // a different site renames nodes named after the old one
    let mut renames: Vec<(String, String)> = Vec::new();
    for v in vars.iter().filter(|v| v.placeholder.starts_with("WEBSITE_DOMAIN")) {
        let Some(new) = values.get(&v.placeholder) else { continue };
        let (old_stem, new_stem) = (site_stem(&example(v)), site_stem(new));
        if old_stem == new_stem {
            continue;
        }
        for node in &out.nodes {
            if let Some(i) = node.name.rfind(&old_stem) {
                let tail = &node.name[i + old_stem.len()..];
                if tail.chars().all(|c| c.is_ascii_digit()) {
                    let renamed = format!("{}{new_stem}{tail}", &node.name[..i]);
                    let clash = out.nodes.iter().any(|n| n.name == renamed)
                        || renames.iter().any(|(_, r)| *r == renamed);
                    if !clash {
                        renames.push((node.name.clone(), renamed));
                    }
                }
            }
        }
    }
    if !renames.is_empty() {
        let map: BTreeMap<&str, &str> = renames.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        for node in &mut out.nodes {
            node.prompt = abstract_literals(&node.prompt, &renames).0;
            for link in std::iter::once(&mut node.name)
                .chain(node.parent.iter_mut())
                .chain(node.children.iter_mut())
            {
                if let Some(new) = map.get(link.as_str()) {
                    *link = new.to_string();
                }
            }
        }
    }

    let changes: Vec<(String, String)> = vars
        .iter()
        .filter_map(|v| Some((example(v), values.get(&v.placeholder)?.clone())))
        .filter(|(old, new)| old != new && !old.is_empty())
        .collect();
    if !changes.is_empty() {
        let apply = |s: &str| abstract_literals(s, &changes).0;
        let mut ctx = serde_json::to_value(&out.context_info).expect("serializes");
        map_strings(&mut ctx, &apply);
        out.context_info = serde_json::from_value(ctx).expect("same shape");
        let mut act = serde_json::to_value(&out.action_info).expect("serializes");
        map_strings(&mut act, &apply);
        out.action_info = serde_json::from_value(act).expect("same shape");
    }
    out.semantic_variables = None;
    out.fill_notes = Some(notes);
    out
}
