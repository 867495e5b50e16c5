use crate::generation::{degenerate_workflow, summary_prompt, ActionInfo, ContextInfo, DetailedAction};
use crate::workflow::steps::{camel_case, render_detailed, site_stem, Step};
use crate::workflow::{Workflow, WorkflowNode, TOOL_VOCABULARY};

struct Phase<'a> {
    verb: String,
    site: String,
    items: Vec<&'a DetailedAction>,
    url: Option<String>,
}

impl Phase<'_> {
    fn values(&self) -> Vec<&str> {
        self.items
            .iter()
            .filter(|a| a.kind == "input" || a.kind == "select")
            .filter_map(|a| a.value.as_deref())
            .collect()
    }

    fn open_target(&self) -> String {
        match &self.url {
            Some(url) => {
                let rest = url.split_once("://").map(|(_, r)| r).unwrap_or(url);
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
            None => self.site.clone(),
        }
    }
}

fn outputs(verb: &str, site: &str) -> String {
    match verb {
        "search" => format!("the result list shown on {site}"),
        "select result" => "details of the chosen item".to_string(),
        "submit form" => "the confirmation shown after submitting".to_string(),
        "fill form" => "the page state after entering the values".to_string(),
        "read content" => "the selected text and its page".to_string(),
        _ => format!("the content of the page on {site}"),
    }
}

/// One node per phase plus a summarizing sink.
pub fn synthesize(ctx: &ContextInfo, act: &ActionInfo) -> Workflow {
    if act.phases.is_empty() {
        return degenerate_workflow(ctx, act);
    }
    let phases: Vec<Phase> = act
        .phases
        .iter()
        .enumerate()
        .map(|(i, label)| {
            let (verb, site) = match label.rsplit_once(" on ") {
                Some((v, s)) => (v.to_string(), s.to_string()),
                None => (label.clone(), act.sites.get(i).cloned().unwrap_or_default()),
            };
            let site = if site == "the current page" { String::new() } else { site };
            let items: Vec<&DetailedAction> = act.detailed_actions.iter().filter(|a| a.phase == i).collect();
            let url = items
                .iter()
                .find(|a| a.kind == "open" || a.kind == "navigate")
                .and_then(|a| a.url.clone());
            Phase { verb, site, items, url }
        })
        .collect();

    let mut names: Vec<String> = Vec::new();
    for p in &phases {
        let stem = if p.site.is_empty() { "Page".to_string() } else { site_stem(&p.site) };
        let base = format!("{}{}", camel_case(&p.verb), stem);
        let mut name = base.clone();
        let mut n = 2;
        while names.contains(&name) || name == "SummarizeResults" {
            name = format!("{base}{n}");
            n += 1;
        }
        names.push(name);
    }

    let parents: Vec<Option<usize>> = (0..phases.len())
        .map(|i| {
            let same_site = (0..i).rev().find(|&j| !phases[i].site.is_empty() && phases[j].site == phases[i].site);
            same_site.or_else(|| {
                let mine = phases[i].values();
                (0..i).rev().find(|&j| phases[j].values().iter().any(|v| mine.contains(v)))
            })
        })
        .collect();

    let mut nodes: Vec<WorkflowNode> = Vec::new();
    for (i, p) in phases.iter().enumerate() {
        let site = if p.site.is_empty() { "the current page".to_string() } else { p.site.clone() };
        let mut steps = vec![match parents[i] {
            Some(j) if phases[j].site == p.site => Step::Continue {
                site: site.clone(),
                from: names[j].clone(),
            },
            _ => Step::Open { target: p.open_target() },
        }];
        for a in &p.items {
            let text = a.target_text.clone().unwrap_or_default();
            match a.kind.as_str() {
                "click" => steps.push(Step::Click { label: text }),
                "submit" => steps.push(Step::Submit { label: text }),
                "input" => steps.push(Step::Fill {
                    field: a
                        .field
                        .clone()
                        .or_else(|| a.field_name.clone())
                        .unwrap_or_else(|| "text field".into()),
                    value: a.value.clone().unwrap_or_default(),
                }),
                "select" => steps.push(Step::SelectText {
                    value: a.value.clone().unwrap_or_default(),
                }),
                _ => {}
            }
        }
        steps.push(Step::Read);

        let decisive = p
            .items
            .iter()
            .rev()
            .find(|a| a.kind == "click" || a.kind == "submit")
            .and_then(|a| a.target_text.as_deref());
        let purpose = match decisive {
            Some(label) => format!("{} on {site} via '{label}'", p.verb),
            None => format!("{} on {site}", p.verb),
        };
        let values = p.values();
        let mut inputs = if values.is_empty() {
            "none".to_string()
        } else {
            values.iter().map(|v| format!("'{v}'")).collect::<Vec<_>>().join(", ")
        };
        let preconditions = match parents[i] {
            Some(j) => {
                inputs.push_str(&format!("; results of {}", names[j]));
                format!("{} completed", names[j])
            }
            None => "none".to_string(),
        };
        let prompt = format!(
            "Purpose: {purpose}. Inputs: {inputs}. Outputs: {}. Preconditions: {preconditions}. \
             Steps: {}. Contingency: if a control is missing, use the closest matching control \
             on {site} and report any step that could not be completed.",
            outputs(&p.verb, &site),
            render_detailed(&steps),
        );

        let uses = |kinds: &[&str]| steps.iter().any(|s| {
            let k = match s {
                Step::Click { .. } | Step::Submit { .. } => "click",
                Step::Fill { .. } => "fill",
                _ => "other",
            };
            kinds.contains(&k)
        });
        let tools = TOOL_VOCABULARY
            .iter()
            .filter(|t| match **t {
                "browser.open" | "browser.read" => true,
                "browser.click" => uses(&["click"]),
                "browser.fill" => uses(&["fill"]),
                _ => false,
            })
            .map(|t| t.to_string())
            .collect();
        let mut node = WorkflowNode::new(names[i].clone(), prompt);
        node.tools = tools;
        if let Some(j) = parents[i] {
            node.parent.push(names[j].clone());
        }
        nodes.push(node);
    }
    for i in 0..nodes.len() {
        if let Some(j) = parents[i] {
            let child = nodes[i].name.clone();
            nodes[j].children.push(child);
        }
    }
    let leaves: Vec<String> = nodes.iter().filter(|n| n.children.is_empty()).map(|n| n.name.clone()).collect();
    for n in nodes.iter_mut().filter(|n| n.children.is_empty()) {
        n.children.push("SummarizeResults".into());
    }
    let mut sink = WorkflowNode::new(
        "SummarizeResults",
        summary_prompt(&leaves.iter().map(String::as_str).collect::<Vec<_>>()),
    );
    sink.parent = leaves;
    nodes.push(sink);

    let mut w = Workflow::new("", nodes);
    w.context_info = ctx.clone();
    w.action_info = act.clone();
    w
}
