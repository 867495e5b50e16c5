use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;

use crate::capture::{parse_log_text, EventKind};
use crate::generation::{ActionInfo, ContextInfo, DetailedAction};
use crate::workflow::steps::site_of;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TraceItem {
    Click(String),
    Input {
        value: String,
        field: Option<String>,
        name: Option<String>,
    },
    Select(String),
    Submit(String),
}

/// Interactions on one page.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseTrace {
    pub site: String,
    pub url: String,
    pub items: Vec<TraceItem>,
}

impl PhaseTrace {
    pub fn verb(&self) -> &'static str {
        let inputs = self.items.iter().any(|i| matches!(i, TraceItem::Input { .. }));
        let searchy = self.items.iter().any(|i| match i {
            TraceItem::Input { field, name, .. } => {
                field.as_deref().is_some_and(is_search_label) || name.as_deref().is_some_and(is_search_label)
            }
            TraceItem::Click(l) => is_search_label(l),
            _ => false,
        });
        let has = |f: fn(&TraceItem) -> bool| self.items.iter().any(f);
        if inputs && searchy {
            "search"
        } else if has(|i| matches!(i, TraceItem::Submit(_))) {
            "submit form"
        } else if inputs {
            "fill form"
        } else if has(|i| matches!(i, TraceItem::Click(_))) {
            "select result"
        } else if has(|i| matches!(i, TraceItem::Select(_))) {
            "read content"
        } else {
            "browse"
        }
    }

    pub fn site_display(&self) -> &str {
        if self.site.is_empty() {
            "the current page"
        } else {
            &self.site
        }
    }

    pub fn label(&self) -> String {
        format!("{} on {}", self.verb(), self.site_display())
    }

    /// Site plus path, without scheme, query or trailing slash.
    pub fn target(&self) -> String {
        if self.url.is_empty() {
            return self.site_display().to_string();
        }
        let rest = self.url.split_once("://").map(|(_, r)| r).unwrap_or(&self.url);
        let path = rest
            .find('/')
            .map(|i| &rest[i..])
            .unwrap_or("")
            .split(['?', '#'])
            .next()
            .unwrap_or("")
            .trim_end_matches('/');
        format!("{}{}", self.site, path)
    }
}

pub fn is_search_label(text: &str) -> bool {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)(search|\bq\b|\bquery\b|\bkeywords?\b|\bfind\b|\bgo\b)").unwrap())
        .is_match(text)
}

/// Groups a rendered log into per-page phases. Consecutive inputs on the
/// same field collapse to the last value, recovering text whose earlier
/// keystroke snapshots were recorded separately.
pub fn parse_trace(log_text: &str) -> Vec<PhaseTrace> {
    let mut phases: Vec<PhaseTrace> = Vec::new();
    for line in parse_log_text(log_text) {
        let d = line.detail();
        if line.kind == EventKind::Navigation {
            let url = d.url.unwrap_or_default();
            if phases.last().is_some_and(|p| p.url == url && p.items.is_empty()) {
                continue;
            }
            phases.push(PhaseTrace {
                site: site_of(&url),
                url,
                items: Vec::new(),
            });
            continue;
        }
        if phases.is_empty() {
            phases.push(PhaseTrace {
                site: String::new(),
                url: String::new(),
                items: Vec::new(),
            });
        }
        let items = &mut phases.last_mut().expect("non-empty").items;
        match line.kind {
            EventKind::Click => items.push(TraceItem::Click(d.label.or(d.tag).unwrap_or_default())),
            EventKind::FormSubmit => items.push(TraceItem::Submit(d.label.or(d.tag).unwrap_or_default())),
            EventKind::TextSelect => items.push(TraceItem::Select(d.value.unwrap_or_default())),
            EventKind::TextInput => {
                let value = d.value.unwrap_or_default();
                if let Some(TraceItem::Input {
                    value: last,
                    field,
                    name,
                }) = items.last_mut()
                {
                    if *field == d.field && *name == d.field_name {
                        *last = value;
                        continue;
                    }
                }
                items.push(TraceItem::Input {
                    value,
                    field: d.field,
                    name: d.field_name,
                });
            }
            EventKind::Navigation => unreachable!(),
        }
    }
    phases
}

fn quoted(values: &[&str]) -> String {
    values.iter().map(|v| format!("'{v}'")).collect::<Vec<_>>().join(", ")
}

fn field_label(field: &Option<String>, name: &Option<String>) -> String {
    field
        .clone()
        .or_else(|| name.clone())
        .unwrap_or_else(|| "text field".to_string())
}

pub fn actions(log_text: &str) -> ActionInfo {
    let phases = parse_trace(log_text);
    let mut out = ActionInfo {
        confidence: if phases.iter().any(|p| p.items.is_empty()) { 0.7 } else { 0.9 },
        ..Default::default()
    };
    let mut seen = BTreeSet::new();
    for (i, p) in phases.iter().enumerate() {
        out.phases.push(p.label());
        if !p.site.is_empty() {
            let first = seen.insert(p.site.clone());
            if first {
                out.sites.push(p.site.clone());
            }
            out.actions.push(if first {
                format!("open {}", p.target())
            } else {
                format!("go to {}", p.target())
            });
            out.detailed_actions.push(DetailedAction {
                phase: i,
                site: p.site.clone(),
                kind: if first { "open" } else { "navigate" }.to_string(),
                target_text: None,
                value: None,
                field: None,
                field_name: None,
                url: Some(p.url.clone()),
            });
        }
        let mut typed: Vec<&str> = Vec::new();
        for item in &p.items {
            let mut d = DetailedAction {
                phase: i,
                site: p.site.clone(),
                kind: String::new(),
                target_text: None,
                value: None,
                field: None,
                field_name: None,
                url: None,
            };
            match item {
                TraceItem::Click(label) => {
                    if is_search_label(label) && !typed.is_empty() {
                        out.actions.push(format!("search for {} via '{label}'", quoted(&typed)));
                    } else {
                        out.actions.push(format!("click '{label}'"));
                    }
                    d.kind = "click".into();
                    d.target_text = Some(label.clone());
                }
                TraceItem::Input { value, field, name } => {
                    out.actions.push(format!("enter '{value}' into '{}'", field_label(field, name)));
                    typed.push(value);
                    d.kind = "input".into();
                    d.value = Some(value.clone());
                    d.field = field.clone();
                    d.field_name = name.clone();
                }
                TraceItem::Select(value) => {
                    out.actions.push(format!("select text '{value}'"));
                    d.kind = "select".into();
                    d.value = Some(value.clone());
                }
                TraceItem::Submit(label) => {
                    out.actions.push(format!("submit '{label}'"));
                    d.kind = "submit".into();
                    d.target_text = Some(label.clone());
                }
            }
            out.detailed_actions.push(d);
        }
    }
    out
}

fn push_unique(list: &mut Vec<String>, v: &str) {
    if !v.is_empty() && !list.iter().any(|x| x == v) {
        list.push(v.to_string());
    }
}

pub fn context(log_text: &str) -> ContextInfo {
    let phases = parse_trace(log_text);
    let mut ctx = ContextInfo::default();
    for p in &phases {
        for item in &p.items {
            if let TraceItem::Input { value, field, name } = item {
                push_unique(&mut ctx.values, value);
                if ctx.interests.len() < 3 {
                    if let Some(label) = field.as_ref().or(name.as_ref()) {
                        push_unique(&mut ctx.interests, label);
                    }
                }
            }
        }
    }
    for p in &phases {
        for item in &p.items {
            if let TraceItem::Select(v) = item {
                push_unique(&mut ctx.values, v);
            }
        }
        push_unique(&mut ctx.entities, &p.site);
        if p.items.iter().any(|i| matches!(i, TraceItem::Input { .. })) {
            for item in &p.items {
                if let TraceItem::Click(label) = item {
                    if !is_search_label(label) {
                        push_unique(&mut ctx.constraints, label);
                    }
                }
            }
        }
    }
    let mut labels: Vec<String> = Vec::new();
    for p in &phases {
        let l = p.label();
        if labels.last() != Some(&l) {
            labels.push(l);
        }
    }
    ctx.goal = if labels.is_empty() {
        "Repeat the demonstrated browsing task.".to_string()
    } else {
        let joined = labels.join(", then ");
        let mut cs = joined.chars();
        let first = cs.next().expect("non-empty").to_uppercase();
        format!("{first}{}.", cs.as_str())
    };
    ctx
}
