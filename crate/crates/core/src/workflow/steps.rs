//! The `Steps:` grammar of node prompts.
//!
//! Steps are `; `-separated segments, optionally numbered `n) `. Both the
//! detailed form written at synthesis time and the generalized form written
//! after adaptation parse into the same [`Step`] list.

use std::sync::OnceLock;

use regex::Regex;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Step {
    /// Open a site or URL (scheme optional) in a new tab.
    Open { target: String },
    /// Continue on `site` from the page the named node finished on.
    Continue { site: String, from: String },
    Click { label: String },
    Fill { field: String, value: String },
    SelectText { value: String },
    Submit { label: String },
    Read,
}

/// The raw text of the `Steps:` section, if any.
pub fn steps_section(prompt: &str) -> Option<&str> {
    let start = prompt.find("Steps:")? + "Steps:".len();
    let end = prompt[start..]
        .find("Contingency:")
        .map(|i| start + i)
        .unwrap_or(prompt.len());
    Some(prompt[start..end].trim())
}

fn segment_res() -> &'static [(Regex, fn(&regex::Captures) -> Step)] {
    static RES: OnceLock<Vec<(Regex, fn(&regex::Captures) -> Step)>> = OnceLock::new();
    RES.get_or_init(|| {
        let r = |p: &str| Regex::new(p).unwrap();
        vec![
            (
                r(r"^(?:open|work on) (.+?) in a new tab$"),
                |c| Step::Open { target: c[1].to_string() },
            ),
            (
                r(r"^continue on (.+?) from the page left by (.+)$"),
                |c| Step::Continue {
                    site: c[1].to_string(),
                    from: c[2].to_string(),
                },
            ),
            (
                r(r"^enter '(.*)' into '(.*)'$"),
                |c| Step::Fill {
                    value: c[1].to_string(),
                    field: c[2].to_string(),
                },
            ),
            (
                r(r"^provide '(.*)' for '(.*)'$"),
                |c| Step::Fill {
                    value: c[1].to_string(),
                    field: c[2].to_string(),
                },
            ),
            (r(r"^(?:click|press) '(.*)'$"), |c| Step::Click { label: c[1].to_string() }),
            (r(r"^select text '(.*)'$"), |c| Step::SelectText { value: c[1].to_string() }),
            (r(r"^submit '(.*)'$"), |c| Step::Submit { label: c[1].to_string() }),
            (r(r"^(?:then )?read the resulting page$"), |_| Step::Read),
        ]
    })
}

fn numbering() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\d+\)\s*").unwrap())
}

/// Parses the Steps section; unrecognized segments are skipped.
pub fn parse_steps(prompt: &str) -> Vec<Step> {
    let Some(section) = steps_section(prompt) else {
        return Vec::new();
    };
    let section = section.strip_suffix('.').unwrap_or(section);
    section
        .split("; ")
        .filter_map(|seg| {
            let seg = numbering().replace(seg.trim(), "");
            segment_res()
                .iter()
                .find_map(|(re, build)| re.captures(&seg).map(|c| build(&c)))
        })
        .collect()
}

/// Detailed form: `1) open x in a new tab; 2) click 'y'; ...`.
pub fn render_detailed(steps: &[Step]) -> String {
    steps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let text = match s {
                Step::Open { target } => format!("open {target} in a new tab"),
                Step::Continue { site, from } => format!("continue on {site} from the page left by {from}"),
                Step::Click { label } => format!("click '{label}'"),
                Step::Fill { field, value } => format!("enter '{value}' into '{field}'"),
                Step::SelectText { value } => format!("select text '{value}'"),
                Step::Submit { label } => format!("submit '{label}'"),
                Step::Read => "read the resulting page".to_string(),
            };
            format!("{}) {text}", i + 1)
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// Generalized form: intermediate clicks are dropped, only the decisive
/// (last) click of the node is kept.
pub fn render_general(steps: &[Step]) -> String {
    let last_click = steps.iter().rposition(|s| matches!(s, Step::Click { .. }));
    let parts: Vec<String> = steps
        .iter()
        .enumerate()
        .filter_map(|(i, s)| match s {
            Step::Open { target } => Some(format!("work on {target} in a new tab")),
            Step::Continue { site, from } => Some(format!("continue on {site} from the page left by {from}")),
            Step::Click { label } if Some(i) == last_click => Some(format!("press '{label}'")),
            Step::Click { .. } => None,
            Step::Fill { field, value } => Some(format!("provide '{value}' for '{field}'")),
            Step::SelectText { value } => Some(format!("select text '{value}'")),
            Step::Submit { label } => Some(format!("submit '{label}'")),
            Step::Read => Some("then read the resulting page".to_string()),
        })
        .collect();
    parts.join("; ")
}

/// Replaces the Steps section body, keeping the surrounding sections.
pub fn replace_steps(prompt: &str, body: &str) -> String {
    let Some(start) = prompt.find("Steps:") else {
        return prompt.to_string();
    };
    let body_start = start + "Steps:".len();
    match prompt[body_start..].find("Contingency:") {
        Some(i) => format!("{}Steps: {body}. {}", &prompt[..start], &prompt[body_start + i..]),
        None => format!("{}Steps: {body}.", &prompt[..start]),
    }
}

/// Host of a URL or bare domain, lower-cased and without `www.`.
pub fn site_of(target: &str) -> String {
    let rest = target.split_once("://").map(|(_, r)| r).unwrap_or(target);
    let host = rest.split(['/', '?', '#']).next().unwrap_or(rest);
    let host = host.rsplit_once('@').map(|(_, h)| h).unwrap_or(host);
    let host = host.to_ascii_lowercase();
    host.strip_prefix("www.").map(str::to_string).unwrap_or(host)
}

/// `kayak.com` → `Kayak`, `news.ycombinator.com` → `Ycombinator`.
pub fn site_stem(site: &str) -> String {
    let labels: Vec<&str> = site.split('.').filter(|l| !l.is_empty()).collect();
    let stem = match labels.len() {
        0 => "Site",
        1 => labels[0],
        n => labels[n - 2],
    };
    camel_case(stem)
}

/// `select result` → `SelectResult`.
pub fn camel_case(text: &str) -> String {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| {
            let mut cs = w.chars();
            let first = cs.next().expect("non-empty").to_ascii_uppercase();
            std::iter::once(first).chain(cs).collect::<String>()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kayak_steps() -> Vec<Step> {
        vec![
            Step::Open { target: "kayak.com".into() },
            Step::Click { label: "Flights".into() },
            Step::Fill {
                field: "From".into(),
                value: "New York".into(),
            },
            Step::Click { label: "Search".into() },
            Step::Read,
        ]
    }

    #[test]
    fn detailed_round_trip() {
        let steps = kayak_steps();
        let prompt = format!(
            "Purpose: x. Steps: {}. Contingency: retry.",
            render_detailed(&steps)
        );
        assert_eq!(parse_steps(&prompt), steps);
    }

    #[test]
    fn general_form_keeps_decisive_click() {
        let steps = kayak_steps();
        let prompt = format!("Steps: {}.", render_general(&steps));
        let parsed = parse_steps(&prompt);
        assert!(!parsed.contains(&Step::Click { label: "Flights".into() }));
        assert!(parsed.contains(&Step::Click { label: "Search".into() }));
        assert_eq!(parsed.len(), 4);
    }

    #[test]
    fn values_may_contain_quotes() {
        let prompt = "Steps: 1) enter 'John's trip' into 'Name'.";
        assert_eq!(
            parse_steps(prompt),
            vec![Step::Fill {
                field: "Name".into(),
                value: "John's trip".into()
            }]
        );
    }

    #[test]
    fn replaces_section() {
        let p = "Purpose: a. Steps: 1) x. Contingency: c.";
        assert_eq!(replace_steps(p, "y"), "Purpose: a. Steps: y. Contingency: c.");
    }

    #[test]
    fn site_helpers() {
        assert_eq!(site_of("https://www.Kayak.com/flights?x=1"), "kayak.com");
        assert_eq!(site_of("kayak.com"), "kayak.com");
        assert_eq!(site_stem("kayak.com"), "Kayak");
        assert_eq!(site_stem("news.ycombinator.com"), "Ycombinator");
        assert_eq!(camel_case("select result"), "SelectResult");
    }
}
