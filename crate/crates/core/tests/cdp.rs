use demoflow_core::execution::cdp::CdpDriver;
use demoflow_core::execution::{BrowserDriver, DriverError};
use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio_tungstenite::tungstenite::Message;

/// Minimal DevTools endpoint: one page whose only control is a "Search"
/// button and a "q" field.
async fn fake_devtools() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        let (stream, _) = listener.accept().await.unwrap();
        let mut ws = tokio_tungstenite::accept_async(stream).await.unwrap();
        while let Some(Ok(Message::Text(text))) = ws.next().await {
            let req: Value = serde_json::from_str(text.as_str()).unwrap();
            let expr = req["params"]["expression"].as_str().unwrap_or("");
            let result = match req["method"].as_str().unwrap() {
                "Target.createTarget" => json!({"targetId": "T1"}),
                "Target.attachToTarget" => json!({"sessionId": "S1"}),
                "Target.closeTarget" => json!({"success": true}),
                "Runtime.evaluate" if expr == "document.readyState" => {
                    json!({"result": {"type": "string", "value": "complete"}})
                }
                "Runtime.evaluate" if expr.starts_with("JSON.stringify") => {
                    let page = json!({"url": "https://shop.test/", "text": "Shop",
                        "targets": [{"descriptor": "Search", "kind": "click"}]});
                    json!({"result": {"type": "string", "value": page.to_string()}})
                }
                "Runtime.evaluate" => {
                    let found = expr.contains("\"Search\"") || expr.contains("\"q\"");
                    json!({"result": {"type": "boolean", "value": found}})
                }
                _ => {
                    let reply = json!({"id": req["id"], "error": {"code": -32601, "message": "unknown"}});
                    ws.send(Message::Text(reply.to_string().into())).await.unwrap();
                    continue;
                }
            };
            if req["method"] == "Target.attachToTarget" {
                assert_eq!(req["params"]["flatten"], true);
            }
            if req["method"] == "Runtime.evaluate" {
                assert_eq!(req["sessionId"], "S1");
            }
            let reply = json!({"id": req["id"], "result": result});
            ws.send(Message::Text(reply.to_string().into())).await.unwrap();
        }
    });
    format!("ws://{addr}/devtools/browser/fake")
}

#[tokio::test]
async fn speaks_the_devtools_protocol() {
    let driver = CdpDriver::connect(&fake_devtools().await).await.unwrap();
    let tab = driver.open_tab("https://shop.test/").await.unwrap();
    driver.fill(tab, "q", "socks").await.unwrap();
    driver.click(tab, "Search").await.unwrap();
    assert!(matches!(driver.click(tab, "Missing").await, Err(DriverError::Action(_))));
    let page = driver.read_page(tab).await.unwrap();
    assert_eq!(page.url, "https://shop.test/");
    assert_eq!(page.targets[0].descriptor, "Search");
    driver.close_tab(tab).await.unwrap();
    assert!(matches!(driver.read_page(tab).await, Err(DriverError::Action(_))));
}

#[tokio::test]
async fn unreachable_endpoints_are_disconnects() {
    let err = CdpDriver::connect("ws://127.0.0.1:9/devtools/browser/x").await.err().unwrap();
    assert!(matches!(err, DriverError::Disconnected(_)));
}

/// Runs against a real browser started with `--remote-debugging-port`.
#[tokio::test]
#[ignore]
async fn real_browser_reads_a_page() {
    let Ok(endpoint) = std::env::var("DEMOFLOW_CDP_ENDPOINT") else {
        return;
    };
    let driver = CdpDriver::connect(&endpoint).await.unwrap();
    let tab = driver.open_tab("https://example.com/").await.unwrap();
    let page = driver.read_page(tab).await.unwrap();
    assert!(page.text.contains("Example Domain"));
    driver.close_tab(tab).await.unwrap();
}
