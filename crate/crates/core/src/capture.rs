//! Demonstration capture: validation, noise filtering, input debouncing and
//! the canonical log text consumed by the generation agents.
//!
//! Events arrive as JSON Lines (one [`RawEvent`] per line). Each event is
//! validated and passed through [`filter_event`]; the surviving stream is
//! collapsed by [`debounce_inputs`] so that every text input carries its
//! finalized value. [`render_log`] turns the result into one line per event:
//!
//! ```text
//! [2025-09-21T01:38:36.942Z] Input: Have a nice weekend in CHic
//! ```

use std::cmp::Ordering;
use std::fmt;
use std::sync::OnceLock;

use chrono::{DateTime, Utc};
use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Inactivity gap that finalizes a text input.
pub const DEBOUNCE_WINDOW_MS: i64 = 500;
/// Identical consecutive clicks closer than this collapse to one.
pub const DUPLICATE_CLICK_WINDOW_MS: i64 = 300;
/// Maximum retained length of `visible_text`, in characters.
pub const VISIBLE_TEXT_LIMIT: usize = 200;

const LOW_INFORMATION_TAGS: [&str; 5] = ["div", "span", "body", "html", "section"];

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error("rejected event: field `{field}` {reason}")]
    Rejected { field: &'static str, reason: String },
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("demonstration log is empty")]
    EmptyLog,
    #[error("malformed log line: {0}")]
    MalformedLine(String),
}

impl CaptureError {
    fn rejected(field: &'static str, reason: impl Into<String>) -> Self {
        CaptureError::Rejected {
            field,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Click,
    TextSelect,
    TextInput,
    FormSubmit,
    Navigation,
}

impl EventKind {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "click" => EventKind::Click,
            "text_select" => EventKind::TextSelect,
            "text_input" => EventKind::TextInput,
            "form_submit" => EventKind::FormSubmit,
            "navigation" => EventKind::Navigation,
            _ => return None,
        })
    }

    /// Label used in rendered log lines.
    pub fn log_label(self) -> &'static str {
        match self {
            EventKind::Click => "Click",
            EventKind::TextSelect => "Select",
            EventKind::TextInput => "Input",
            EventKind::FormSubmit => "Submit",
            EventKind::Navigation => "Navigate",
        }
    }

    pub fn from_log_label(s: &str) -> Option<Self> {
        Some(match s {
            "Click" => EventKind::Click,
            "Select" => EventKind::TextSelect,
            "Input" => EventKind::TextInput,
            "Submit" => EventKind::FormSubmit,
            "Navigate" => EventKind::Navigation,
            _ => return None,
        })
    }
}

/// RFC-3339 instant that remembers its original spelling, so rendered logs
/// reproduce the recorder's text byte for byte.
#[derive(Debug, Clone)]
pub struct Timestamp {
    text: String,
    instant: DateTime<Utc>,
}

impl Timestamp {
    pub fn parse(text: &str) -> Result<Self, chrono::ParseError> {
        let instant = DateTime::parse_from_rfc3339(text)?.with_timezone(&Utc);
        Ok(Timestamp {
            text: text.to_string(),
            instant,
        })
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn instant(&self) -> DateTime<Utc> {
        self.instant
    }

    fn millis_since(&self, earlier: &Timestamp) -> i64 {
        (self.instant - earlier.instant).num_milliseconds()
    }
}

impl PartialEq for Timestamp {
    fn eq(&self, other: &Self) -> bool {
        self.text == other.text
    }
}

impl Eq for Timestamp {}

impl PartialOrd for Timestamp {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Timestamp {
    fn cmp(&self, other: &Self) -> Ordering {
        self.instant
            .cmp(&other.instant)
            .then_with(|| self.text.cmp(&other.text))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

impl Serialize for Timestamp {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.text)
    }
}

impl<'de> Deserialize<'de> for Timestamp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Timestamp::parse(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementMeta {
    #[serde(default)]
    pub tag: String,
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub classes: Vec<String>,
    #[serde(default)]
    pub role: Option<String>,
    #[serde(default)]
    pub visible_text: Option<String>,
    #[serde(default)]
    pub input_name: Option<String>,
}

impl ElementMeta {
    /// Lowercases the tag, trims and truncates visible text, and drops empty
    /// optional strings.
    pub fn normalized(&self) -> ElementMeta {
        fn non_empty(v: &Option<String>) -> Option<String> {
            v.as_deref()
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
        }
        ElementMeta {
            tag: self.tag.trim().to_ascii_lowercase(),
            id: non_empty(&self.id),
            classes: self
                .classes
                .iter()
                .map(|c| c.trim())
                .filter(|c| !c.is_empty())
                .map(str::to_string)
                .collect(),
            role: non_empty(&self.role),
            visible_text: non_empty(&self.visible_text)
                .map(|t| t.chars().take(VISIBLE_TEXT_LIMIT).collect::<String>())
                .map(|t| t.trim_end().to_string()),
            input_name: non_empty(&self.input_name),
        }
    }

    /// Human-facing label: visible text, then id, then form-field name.
    pub fn label(&self) -> Option<&str> {
        self.visible_text
            .as_deref()
            .or(self.id.as_deref())
            .or(self.input_name.as_deref())
    }

    fn same_element(&self, other: &ElementMeta) -> bool {
        self.tag == other.tag
            && self.id == other.id
            && self.input_name == other.input_name
            && self.role == other.role
            && self.classes == other.classes
    }
}

/// Event as delivered by the recorder, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawEvent {
    pub timestamp: String,
    pub kind: String,
    #[serde(default)]
    pub page_url: String,
    #[serde(default)]
    pub page_title: String,
    #[serde(default)]
    pub target: ElementMeta,
    #[serde(default)]
    pub value: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoEvent {
    pub timestamp: Timestamp,
    pub kind: EventKind,
    pub page_url: String,
    pub page_title: String,
    pub target: ElementMeta,
    pub value: Option<String>,
    pub finalized: bool,
}

impl DemoEvent {
    fn same_target(&self, other: &DemoEvent) -> bool {
        self.page_url == other.page_url && self.target.same_element(&other.target)
    }
}

/// Checks a raw event against the wire invariants and normalizes it.
pub fn validate_event(raw: &RawEvent) -> Result<DemoEvent, CaptureError> {
    let timestamp = Timestamp::parse(raw.timestamp.trim())
        .map_err(|e| CaptureError::rejected("timestamp", format!("is not RFC-3339: {e}")))?;
    let kind = EventKind::parse(&raw.kind)
        .ok_or_else(|| CaptureError::rejected("kind", format!("has unknown value {:?}", raw.kind)))?;
    let page_url = raw.page_url.trim().to_string();
    if kind == EventKind::Navigation && page_url.is_empty() {
        return Err(CaptureError::rejected("page_url", "must be non-empty on navigation"));
    }
    let mut target = raw.target.normalized();
    if target.tag.is_empty() {
        if kind == EventKind::Navigation {
            target.tag = "document".to_string();
        } else {
            return Err(CaptureError::rejected("target.tag", "must be non-empty"));
        }
    }
    Ok(DemoEvent {
        timestamp,
        kind,
        page_url,
        page_title: raw.page_title.trim().to_string(),
        target,
        value: raw.value.clone(),
        finalized: true,
    })
}

/// Generic layout containers without any identifying attribute.
pub fn is_low_information(target: &ElementMeta) -> bool {
    LOW_INFORMATION_TAGS.contains(&target.tag.as_str())
        && target.id.is_none()
        && target.role.is_none()
        && target.visible_text.is_none()
}

/// Validates `raw` and drops it when it targets a low-information element.
/// Navigations describe the page rather than an element and always pass.
pub fn filter_event(raw: &RawEvent) -> Result<Option<DemoEvent>, CaptureError> {
    let event = validate_event(raw)?;
    if event.kind != EventKind::Navigation && is_low_information(&event.target) {
        return Ok(None);
    }
    Ok(Some(event))
}

/// Collapses transient input and duplicate clicks.
///
/// A run of text inputs on one element collapses into its last value until
/// another element is touched, a submit/navigation happens, or the field is
/// idle for [`DEBOUNCE_WINDOW_MS`]. The function is idempotent.
pub fn debounce_inputs(stream: &[DemoEvent]) -> Vec<DemoEvent> {
    let mut out: Vec<DemoEvent> = Vec::with_capacity(stream.len());
    for event in stream {
        if let Some(prev) = out.last_mut() {
            let gap = event.timestamp.millis_since(&prev.timestamp);
            match event.kind {
                EventKind::TextInput
                    if prev.kind == EventKind::TextInput
                        && prev.same_target(event)
                        && gap <= DEBOUNCE_WINDOW_MS =>
                {
                    *prev = event.clone();
                    continue;
                }
                EventKind::Click
                    if prev.kind == EventKind::Click
                        && prev.page_url == event.page_url
                        && prev.target == event.target
                        && gap <= DUPLICATE_CLICK_WINDOW_MS =>
                {
                    continue;
                }
                _ => {}
            }
        }
        out.push(event.clone());
    }
    for e in &mut out {
        e.finalized = true;
    }
    out
}

/// Ordered, finalized demonstration for one recording session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemoLog {
    pub session_id: String,
    pub events: Vec<DemoEvent>,
}

impl DemoLog {
    pub fn new(session_id: impl Into<String>) -> Self {
        DemoLog {
            session_id: session_id.into(),
            events: Vec::new(),
        }
    }

    /// Builds a log from filtered events: stable sort by instant, then
    /// debounce.
    pub fn from_filtered(session_id: impl Into<String>, mut events: Vec<DemoEvent>) -> Self {
        events.sort_by_key(|e| e.timestamp.instant());
        DemoLog {
            session_id: session_id.into(),
            events: debounce_inputs(&events),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }
}

/// Stateful per-session ingest. Keeps every filtered event so that the
/// debounced snapshot can be recomputed as the demonstration grows.
#[derive(Debug, Clone)]
pub struct Recorder {
    session_id: String,
    kept: Vec<DemoEvent>,
}

impl Recorder {
    pub fn new(session_id: impl Into<String>) -> Self {
        Recorder {
            session_id: session_id.into(),
            kept: Vec::new(),
        }
    }

    /// Returns whether the event survived filtering.
    pub fn ingest(&mut self, raw: &RawEvent) -> Result<bool, CaptureError> {
        match filter_event(raw)? {
            Some(event) => {
                self.kept.push(event);
                Ok(true)
            }
            None => Ok(false),
        }
    }

    pub fn snapshot(&self) -> DemoLog {
        DemoLog::from_filtered(self.session_id.clone(), self.kept.clone())
    }
}

/// Parses a JSON Lines batch. Blank lines are skipped.
pub fn parse_jsonl(text: &str) -> Result<Vec<RawEvent>, CaptureError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|source| CaptureError::Json { line: i + 1, source }))
        .collect()
}

/// Validates, filters and debounces a whole recording.
pub fn capture_log(session_id: &str, raw: &[RawEvent]) -> Result<DemoLog, CaptureError> {
    let mut recorder = Recorder::new(session_id);
    for event in raw {
        recorder.ingest(event)?;
    }
    Ok(recorder.snapshot())
}

fn one_line(s: &str) -> String {
    s.replace("\r\n", "\\n").replace(['\n', '\r'], "\\n")
}

fn describe(event: &DemoEvent) -> String {
    let t = &event.target;
    match event.kind {
        EventKind::Navigation => {
            if event.page_title.is_empty() {
                one_line(&event.page_url)
            } else {
                format!("{} \"{}\"", one_line(&event.page_url), one_line(&event.page_title))
            }
        }
        EventKind::Click | EventKind::FormSubmit => {
            let label = t.label().map(one_line).unwrap_or_else(|| t.tag.clone());
            format!("'{}' ({})", label, t.tag)
        }
        EventKind::TextInput => {
            let mut s = one_line(event.value.as_deref().unwrap_or(""));
            if let Some(field) = t.visible_text.as_deref().or(t.id.as_deref()) {
                s.push_str(&format!(" (field '{}')", one_line(field)));
            }
            if let Some(name) = t.input_name.as_deref() {
                s.push_str(&format!(" (name '{}')", one_line(name)));
            }
            s
        }
        EventKind::TextSelect => one_line(
            event
                .value
                .as_deref()
                .or(t.visible_text.as_deref())
                .unwrap_or(""),
        ),
    }
}

pub fn render_line(event: &DemoEvent) -> String {
    format!(
        "[{}] {}: {}",
        event.timestamp,
        event.kind.log_label(),
        describe(event)
    )
}

/// One line per event, newline terminated.
pub fn render_log(log: &DemoLog) -> Result<String, CaptureError> {
    if log.events.is_empty() {
        return Err(CaptureError::EmptyLog);
    }
    let mut out = String::new();
    for e in &log.events {
        out.push_str(&render_line(e));
        out.push('\n');
    }
    Ok(out)
}

/// Parsed form of a rendered line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogLine {
    pub timestamp: String,
    pub kind: EventKind,
    pub description: String,
}

impl LogLine {
    pub fn detail(&self) -> LineDetail {
        LineDetail::parse(self.kind, &self.description)
    }
}

fn line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\[([^\]]+)\] ([A-Za-z]+): ?(.*)$").unwrap())
}

pub fn parse_log_line(line: &str) -> Result<LogLine, CaptureError> {
    let caps = line_re()
        .captures(line)
        .ok_or_else(|| CaptureError::MalformedLine(line.to_string()))?;
    let kind = EventKind::from_log_label(&caps[2])
        .ok_or_else(|| CaptureError::MalformedLine(line.to_string()))?;
    Ok(LogLine {
        timestamp: caps[1].to_string(),
        kind,
        description: caps[3].to_string(),
    })
}

/// Parses every well-formed line of a rendered log, skipping the rest.
pub fn parse_log_text(text: &str) -> Vec<LogLine> {
    text.lines().filter_map(|l| parse_log_line(l).ok()).collect()
}

/// Structured fields recovered from a line description.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LineDetail {
    /// Clicked/submitted element label.
    pub label: Option<String>,
    pub tag: Option<String>,
    /// Input or selection payload.
    pub value: Option<String>,
    pub field: Option<String>,
    pub field_name: Option<String>,
    pub url: Option<String>,
    pub title: Option<String>,
}

impl LineDetail {
    pub fn parse(kind: EventKind, description: &str) -> LineDetail {
        static ELEMENT: OnceLock<Regex> = OnceLock::new();
        static INPUT: OnceLock<Regex> = OnceLock::new();
        static NAV: OnceLock<Regex> = OnceLock::new();
        match kind {
            EventKind::Click | EventKind::FormSubmit => {
                let re = ELEMENT.get_or_init(|| Regex::new(r"^'(.*)' \(([^()]*)\)$").unwrap());
                match re.captures(description) {
                    Some(c) => LineDetail {
                        label: Some(c[1].to_string()),
                        tag: Some(c[2].to_string()),
                        ..Default::default()
                    },
                    None => LineDetail {
                        label: Some(description.to_string()),
                        ..Default::default()
                    },
                }
            }
            EventKind::TextInput => {
                let re = INPUT.get_or_init(|| {
                    Regex::new(r"^(.*?)(?: \(field '([^']*)'\))?(?: \(name '([^']*)'\))?$").unwrap()
                });
                let c = re.captures(description).expect("pattern matches any text");
                LineDetail {
                    value: Some(c[1].to_string()),
                    field: c.get(2).map(|m| m.as_str().to_string()),
                    field_name: c.get(3).map(|m| m.as_str().to_string()),
                    ..Default::default()
                }
            }
            EventKind::TextSelect => LineDetail {
                value: Some(description.to_string()),
                ..Default::default()
            },
            EventKind::Navigation => {
                let re = NAV.get_or_init(|| Regex::new(r#"^(\S+)(?: "(.*)")?$"#).unwrap());
                match re.captures(description) {
                    Some(c) => LineDetail {
                        url: Some(c[1].to_string()),
                        title: c.get(2).map(|m| m.as_str().to_string()),
                        ..Default::default()
                    },
                    None => LineDetail {
                        url: Some(description.to_string()),
                        ..Default::default()
                    },
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(ts: &str, kind: &str, tag: &str) -> RawEvent {
        RawEvent {
            timestamp: ts.to_string(),
            kind: kind.to_string(),
            page_url: "https://www.kayak.com/".to_string(),
            page_title: "Kayak".to_string(),
            target: ElementMeta {
                tag: tag.to_string(),
                ..Default::default()
            },
            value: None,
        }
    }

    fn input(ts: &str, field: &str, value: &str) -> DemoEvent {
        let mut r = raw(ts, "text_input", "input");
        r.target.id = Some(field.to_string());
        r.value = Some(value.to_string());
        validate_event(&r).unwrap()
    }

    fn click(ts: &str, text: &str) -> DemoEvent {
        let mut r = raw(ts, "click", "button");
        r.target.visible_text = Some(text.to_string());
        validate_event(&r).unwrap()
    }

    #[test]
    fn bare_div_click_is_dropped() {
        assert!(filter_event(&raw("2025-09-21T01:00:00Z", "click", "div"))
            .unwrap()
            .is_none());
    }

    #[test]
    fn labelled_button_is_kept() {
        let mut r = raw("2025-09-21T01:00:00Z", "click", "button");
        r.target.visible_text = Some("Search".into());
        let e = filter_event(&r).unwrap().unwrap();
        assert_eq!(e.kind, EventKind::Click);
        assert_eq!(e.target.visible_text.as_deref(), Some("Search"));
        assert!(e.finalized);
    }

    #[test]
    fn div_with_role_button_is_kept() {
        // tag is in the container set, but role and visible_text are present
        let mut r = raw("2025-09-21T01:00:00Z", "click", "DIV");
        r.target.role = Some("button".into());
        r.target.visible_text = Some("Flights".into());
        assert!(filter_event(&r).unwrap().is_some());
    }

    #[test]
    fn navigation_on_document_is_kept() {
        let r = raw("2025-09-21T01:00:00Z", "navigation", "html");
        assert!(filter_event(&r).unwrap().is_some());
    }

    #[test]
    fn rejections_name_the_field() {
        let err = filter_event(&raw("yesterday", "click", "a")).unwrap_err();
        assert!(matches!(err, CaptureError::Rejected { field: "timestamp", .. }));
        let err = filter_event(&raw("2025-09-21T01:00:00Z", "hover", "a")).unwrap_err();
        assert!(matches!(err, CaptureError::Rejected { field: "kind", .. }));
        let mut nav = raw("2025-09-21T01:00:00Z", "navigation", "a");
        nav.page_url.clear();
        let err = filter_event(&nav).unwrap_err();
        assert!(matches!(err, CaptureError::Rejected { field: "page_url", .. }));
        let err = filter_event(&raw("2025-09-21T01:00:00Z", "click", " ")).unwrap_err();
        assert!(matches!(err, CaptureError::Rejected { field: "target.tag", .. }));
    }

    #[test]
    fn visible_text_is_trimmed_and_truncated() {
        let mut r = raw("2025-09-21T01:00:00Z", "click", "a");
        r.target.visible_text = Some(format!("  {}  ", "x".repeat(300)));
        let e = filter_event(&r).unwrap().unwrap();
        assert_eq!(e.target.visible_text.unwrap().chars().count(), VISIBLE_TEXT_LIMIT);
        r.target.visible_text = Some("   ".into());
        let e = filter_event(&r).unwrap().unwrap();
        assert_eq!(e.target.visible_text, None);
    }

    #[test]
    fn keystrokes_collapse_to_final_text() {
        let stream = vec![
            input("2025-09-21T01:38:36.100Z", "msg", "H"),
            input("2025-09-21T01:38:36.300Z", "msg", "Ha"),
            input(
                "2025-09-21T01:38:36.700Z",
                "msg",
                "Have a nice weekend in Chicago...",
            ),
        ];
        let out = debounce_inputs(&stream);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].value.as_deref(), Some("Have a nice weekend in Chicago..."));
    }

    #[test]
    fn empty_stream_stays_empty() {
        assert!(debounce_inputs(&[]).is_empty());
    }

    #[test]
    fn other_target_finalizes_input() {
        // Par/Paris on A, click B, Lyo/Lyon on A
        let stream = vec![
            input("2025-01-01T00:00:00.000Z", "A", "Par"),
            input("2025-01-01T00:00:00.100Z", "A", "Paris"),
            click("2025-01-01T00:00:00.200Z", "B"),
            input("2025-01-01T00:00:00.300Z", "A", "Lyo"),
            input("2025-01-01T00:00:00.400Z", "A", "Lyon"),
        ];
        let out = debounce_inputs(&stream);
        let values: Vec<_> = out.iter().map(|e| e.value.clone()).collect();
        assert_eq!(
            values,
            vec![Some("Paris".to_string()), None, Some("Lyon".to_string())]
        );
    }

    #[test]
    fn idle_window_finalizes_input() {
        let stream = vec![
            input("2025-01-01T00:00:00.000Z", "A", "Par"),
            input("2025-01-01T00:00:00.600Z", "A", "Paris"),
        ];
        assert_eq!(debounce_inputs(&stream).len(), 2);
    }

    #[test]
    fn duplicate_clicks_collapse() {
        let stream = vec![
            click("2025-01-01T00:00:00.000Z", "Go"),
            click("2025-01-01T00:00:00.200Z", "Go"),
            click("2025-01-01T00:00:00.400Z", "Go"),
        ];
        let out = debounce_inputs(&stream);
        assert_eq!(out.len(), 2);
        assert_eq!(debounce_inputs(&out), out);
    }

    #[test]
    fn renders_appendix_line() {
        let mut r = raw("2025-09-21T01:38:36.942Z", "text_input", "textarea");
        r.value = Some("Have a nice weekend in CHic".into());
        let log = DemoLog::from_filtered("s", vec![filter_event(&r).unwrap().unwrap()]);
        assert_eq!(
            render_log(&log).unwrap(),
            "[2025-09-21T01:38:36.942Z] Input: Have a nice weekend in CHic\n"
        );
    }

    #[test]
    fn navigation_line_mentions_url() {
        let mut r = raw("2025-09-21T01:38:36.942Z", "navigation", "html");
        r.page_url = "https://www.kayak.com/".into();
        let log = DemoLog::from_filtered("s", vec![filter_event(&r).unwrap().unwrap()]);
        let text = render_log(&log).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.contains("kayak.com"));
    }

    #[test]
    fn events_sort_by_time_with_stable_ties() {
        let a = click("2025-01-01T00:00:02Z", "late");
        let b = click("2025-01-01T00:00:01Z", "first");
        let c = click("2025-01-01T00:00:01.000Z", "tie");
        let log = DemoLog::from_filtered("s", vec![a, b, c]);
        let text = render_log(&log).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].contains("first"));
        assert!(lines[1].contains("tie"));
        assert!(lines[2].contains("late"));
    }

    #[test]
    fn empty_log_is_an_error() {
        assert!(matches!(render_log(&DemoLog::new("s")), Err(CaptureError::EmptyLog)));
    }

    #[test]
    fn input_detail_round_trip() {
        let mut r = raw("2025-09-21T01:38:36.942Z", "text_input", "input");
        r.target.visible_text = Some("From".into());
        r.target.input_name = Some("origin".into());
        r.value = Some("New York".into());
        let e = filter_event(&r).unwrap().unwrap();
        let line = parse_log_line(&render_line(&e)).unwrap();
        let d = line.detail();
        assert_eq!(d.value.as_deref(), Some("New York"));
        assert_eq!(d.field.as_deref(), Some("From"));
        assert_eq!(d.field_name.as_deref(), Some("origin"));
    }
}
