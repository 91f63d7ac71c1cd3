//! Client-side helpers for driving a running server.

use std::time::Duration;

use futures::StreamExt;
use serde_json::Value;

use kgqa_core::server::{start, RunningServer, Runtime};

use super::demo_app_config;

pub const WAIT: Duration = Duration::from_secs(10);

pub async fn boot(store: &std::path::Path) -> (RunningServer, String) {
    let server = start(Runtime::from_config(demo_app_config(store)).unwrap())
        .await
        .unwrap();
    let base = format!("http://{}", server.addr());
    (server, base)
}

pub async fn snapshot(client: &reqwest::Client, base: &str, id: &str) -> Value {
    client
        .get(format!("{base}/api/sessions/{id}"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap()
}

/// Poll the snapshot until `done` holds.
pub async fn wait_for(
    client: &reqwest::Client,
    base: &str,
    id: &str,
    done: impl Fn(&Value) -> bool,
) -> Value {
    tokio::time::timeout(WAIT, async {
        loop {
            let s = snapshot(client, base, id).await;
            if done(&s) {
                return s;
            }
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
    })
    .await
    .expect("session did not reach the expected state")
}

/// Read event lines from the stream until `stop` matches one of them.
pub async fn read_events(client: &reqwest::Client, base: &str, id: &str, stop: &str) -> Vec<Value> {
    let resp = client
        .get(format!("{base}/api/sessions/{id}/events?from=0"))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.headers()["content-type"], "application/x-ndjson");
    let mut body = resp.bytes_stream();
    let mut buf = String::new();
    let mut events = Vec::new();
    tokio::time::timeout(WAIT, async {
        while let Some(chunk) = body.next().await {
            buf.push_str(std::str::from_utf8(&chunk.unwrap()).unwrap());
            while let Some(i) = buf.find('\n') {
                let line: String = buf.drain(..=i).collect();
                let event: Value = serde_json::from_str(&line).unwrap();
                let hit = event["subState"]["detail"] == stop;
                events.push(event);
                if hit {
                    return;
                }
            }
        }
    })
    .await
    .expect("event stream stalled");
    events
}
