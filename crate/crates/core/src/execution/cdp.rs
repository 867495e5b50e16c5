//! Chrome DevTools Protocol driver.
//!
//! Connects to a browser-level debugging endpoint (`ws://…/devtools/browser/…`
//! or `http://host:port`, resolved through `/json/version`) and drives one
//! flattened target session per tab.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use async_trait::async_trait;
use futures::stream::SplitSink;
use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::net::TcpStream;
use tokio::sync::oneshot;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{MaybeTlsStream, WebSocketStream};

use super::driver::{BrowserDriver, DriverError, PageSnapshot, PageTarget, TabId};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;
type Pending = Arc<Mutex<HashMap<u64, oneshot::Sender<Result<Value, String>>>>>;

const CALL_TIMEOUT: Duration = Duration::from_secs(30);
const LOAD_TIMEOUT: Duration = Duration::from_secs(15);

const FIND_JS: &str = r#"function __dfFind(d, mode) {
  const want = d.trim().toLowerCase();
  const sel = mode === 'fill'
    ? 'input,textarea,select,[contenteditable=true]'
    : 'a,button,input[type=submit],input[type=button],[role=button],[onclick],summary,form';
  const els = Array.from(document.querySelectorAll(sel));
  const names = el => [el.innerText, el.value, el.getAttribute('aria-label'), el.getAttribute('placeholder'),
    el.getAttribute('name'), el.id, el.getAttribute('title'),
    el.labels && el.labels[0] && el.labels[0].innerText]
    .filter(Boolean).map(s => String(s).trim().toLowerCase());
  return els.find(el => names(el).some(n => n === want))
    || els.find(el => names(el).some(n => n.includes(want)));
}"#;

const READ_JS: &str = r#"JSON.stringify({
  url: location.href,
  text: (document.title ? document.title + '\n' : '') + (document.body ? document.body.innerText : ''),
  targets: Array.from(document.querySelectorAll('a,button,input,textarea,select,[role=button]')).slice(0, 200)
    .map(el => ({
      descriptor: (el.innerText || el.getAttribute('aria-label') || el.getAttribute('placeholder')
        || el.getAttribute('name') || el.id || '').trim().slice(0, 80),
      kind: /^(INPUT|TEXTAREA|SELECT)$/.test(el.tagName) && !/^(submit|button)$/.test(el.type) ? 'fill' : 'click'
    }))
    .filter(t => t.descriptor)
})"#;

pub struct CdpDriver {
    sink: tokio::sync::Mutex<SplitSink<Ws, Message>>,
    pending: Pending,
    closed: Arc<AtomicBool>,
    next_id: AtomicU64,
    next_tab: AtomicU64,
    tabs: Mutex<BTreeMap<TabId, (String, String)>>,
    http: reqwest::Client,
}

impl CdpDriver {
    pub async fn connect(endpoint: &str) -> Result<Self, DriverError> {
        let http = reqwest::Client::new();
        let ws_url = if endpoint.starts_with("ws://") || endpoint.starts_with("wss://") {
            endpoint.to_string()
        } else {
            let version: Value = http
                .get(format!("{}/json/version", endpoint.trim_end_matches('/')))
                .send()
                .await
                .map_err(|e| DriverError::Disconnected(e.to_string()))?
                .json()
                .await
                .map_err(|e| DriverError::Disconnected(e.to_string()))?;
            version["webSocketDebuggerUrl"]
                .as_str()
                .ok_or_else(|| DriverError::Disconnected("endpoint reports no webSocketDebuggerUrl".into()))?
                .to_string()
        };
        let (ws, _) = tokio_tungstenite::connect_async(ws_url.as_str())
            .await
            .map_err(|e| DriverError::Disconnected(e.to_string()))?;
        let (sink, mut stream) = ws.split();
        let pending: Pending = Arc::default();
        let closed = Arc::new(AtomicBool::new(false));
        let (p, c) = (pending.clone(), closed.clone());
        tokio::spawn(async move {
            while let Some(Ok(msg)) = stream.next().await {
                let Message::Text(text) = msg else { continue };
                let Ok(v) = serde_json::from_str::<Value>(text.as_str()) else { continue };
                let Some(id) = v.get("id").and_then(Value::as_u64) else { continue };
                if let Some(tx) = p.lock().unwrap().remove(&id) {
                    let reply = match v.get("error") {
                        Some(e) => Err(e.to_string()),
                        None => Ok(v.get("result").cloned().unwrap_or(Value::Null)),
                    };
                    let _ = tx.send(reply);
                }
            }
            c.store(true, Ordering::SeqCst);
            p.lock().unwrap().clear();
        });
        Ok(CdpDriver {
            sink: tokio::sync::Mutex::new(sink),
            pending,
            closed,
            next_id: AtomicU64::new(1),
            next_tab: AtomicU64::new(1),
            tabs: Mutex::new(BTreeMap::new()),
            http,
        })
    }

    async fn call(&self, method: &str, params: Value, session: Option<&str>) -> Result<Value, DriverError> {
        if self.closed.load(Ordering::SeqCst) {
            return Err(DriverError::Disconnected("devtools connection closed".into()));
        }
        let id = self.next_id.fetch_add(1, Ordering::SeqCst);
        let mut msg = json!({"id": id, "method": method, "params": params});
        if let Some(s) = session {
            msg["sessionId"] = json!(s);
        }
        let (tx, rx) = oneshot::channel();
        self.pending.lock().unwrap().insert(id, tx);
        self.sink
            .lock()
            .await
            .send(Message::Text(msg.to_string().into()))
            .await
            .map_err(|e| DriverError::Disconnected(e.to_string()))?;
        match tokio::time::timeout(CALL_TIMEOUT, rx).await {
            Ok(Ok(Ok(v))) => Ok(v),
            Ok(Ok(Err(e))) => Err(DriverError::Action(format!("{method}: {e}"))),
            Ok(Err(_)) => Err(DriverError::Disconnected("devtools connection closed".into())),
            Err(_) => Err(DriverError::Action(format!("{method} timed out"))),
        }
    }

    fn session(&self, tab: TabId) -> Result<String, DriverError> {
        self.tabs
            .lock()
            .unwrap()
            .get(&tab)
            .map(|(_, s)| s.clone())
            .ok_or_else(|| DriverError::Action(format!("unknown tab {}", tab.0)))
    }

    async fn evaluate(&self, session: &str, expression: &str) -> Result<Value, DriverError> {
        let r = self
            .call(
                "Runtime.evaluate",
                json!({"expression": expression, "returnByValue": true, "awaitPromise": true}),
                Some(session),
            )
            .await?;
        if let Some(e) = r.get("exceptionDetails") {
            return Err(DriverError::Action(format!("script error: {e}")));
        }
        Ok(r["result"]["value"].clone())
    }

    async fn wait_ready(&self, session: &str) -> Result<(), DriverError> {
        let deadline = tokio::time::Instant::now() + LOAD_TIMEOUT;
        loop {
            if let Ok(Value::String(s)) = self.evaluate(session, "document.readyState").await {
                if s == "complete" {
                    return Ok(());
                }
            }
            if tokio::time::Instant::now() >= deadline {
                return Err(DriverError::Action("page did not finish loading".into()));
            }
            tokio::time::sleep(Duration::from_millis(100)).await;
        }
    }
}

#[async_trait]
impl BrowserDriver for CdpDriver {
    async fn open_tab(&self, url: &str) -> Result<TabId, DriverError> {
        let target = self.call("Target.createTarget", json!({"url": url}), None).await?;
        let target_id = target["targetId"]
            .as_str()
            .ok_or_else(|| DriverError::Action("no targetId".into()))?
            .to_string();
        let attached = self
            .call("Target.attachToTarget", json!({"targetId": target_id, "flatten": true}), None)
            .await?;
        let session = attached["sessionId"]
            .as_str()
            .ok_or_else(|| DriverError::Action("no sessionId".into()))?
            .to_string();
        self.wait_ready(&session).await?;
        let tab = TabId(self.next_tab.fetch_add(1, Ordering::SeqCst));
        self.tabs.lock().unwrap().insert(tab, (target_id, session));
        Ok(tab)
    }

    async fn click(&self, tab: TabId, descriptor: &str) -> Result<(), DriverError> {
        let session = self.session(tab)?;
        let script = format!(
            "{FIND_JS}\n(() => {{ const el = __dfFind({d}, 'click'); if (!el) return false; \
             if (el.tagName === 'FORM') {{ el.requestSubmit(); }} else {{ el.click(); }} return true; }})()",
            d = json!(descriptor)
        );
        if self.evaluate(&session, &script).await? != Value::Bool(true) {
            return Err(DriverError::Action(format!("no element matching '{descriptor}'")));
        }
        tokio::time::sleep(Duration::from_millis(300)).await;
        self.wait_ready(&session).await
    }

    async fn fill(&self, tab: TabId, descriptor: &str, value: &str) -> Result<(), DriverError> {
        let session = self.session(tab)?;
        let script = format!(
            "{FIND_JS}\n(() => {{ const el = __dfFind({d}, 'fill'); if (!el) return false; el.focus(); \
             if (el.isContentEditable) {{ el.innerText = {v}; }} else {{ el.value = {v}; }} \
             el.dispatchEvent(new Event('input', {{bubbles: true}})); \
             el.dispatchEvent(new Event('change', {{bubbles: true}})); return true; }})()",
            d = json!(descriptor),
            v = json!(value)
        );
        if self.evaluate(&session, &script).await? != Value::Bool(true) {
            return Err(DriverError::Action(format!("no field matching '{descriptor}'")));
        }
        Ok(())
    }

    async fn read_page(&self, tab: TabId) -> Result<PageSnapshot, DriverError> {
        let session = self.session(tab)?;
        let raw = self.evaluate(&session, READ_JS).await?;
        let text = raw.as_str().ok_or_else(|| DriverError::Action("page unreadable".into()))?;
        #[derive(serde::Deserialize)]
        struct Raw {
            url: String,
            text: String,
            targets: Vec<PageTarget>,
        }
        let r: Raw = serde_json::from_str(text).map_err(|e| DriverError::Action(e.to_string()))?;
        Ok(PageSnapshot {
            url: r.url,
            text: r.text,
            targets: r.targets,
        })
    }

    async fn fetch(&self, url: &str) -> Result<String, DriverError> {
        let response = self
            .http
            .get(url)
            .send()
            .await
            .map_err(|e| DriverError::Action(e.to_string()))?;
        response.text().await.map_err(|e| DriverError::Action(e.to_string()))
    }

    async fn close_tab(&self, tab: TabId) -> Result<(), DriverError> {
        let entry = self.tabs.lock().unwrap().remove(&tab);
        if let Some((target_id, _)) = entry {
            self.call("Target.closeTarget", json!({"targetId": target_id}), None).await?;
        }
        Ok(())
    }
}
