//! Advisory service tests: endpoint behavior, snapshot swap semantics, and
//! read consistency. The server runs in-process on an ephemeral port and is
//! driven over a raw TCP connection.

use std::path::Path;
use std::sync::Arc;

use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};

use riskmgr_cli::serve::{router, AppState};
use riskmgr_core::corpus::{build_snapshot, demo_dataset, CorpusSnapshot};
use riskmgr_core::pipeline::{ClusterAlgorithm, PipelineParams};
use riskmgr_core::predictor::Hyperparams;

fn demo_snapshot() -> CorpusSnapshot {
    let demo = demo_dataset();
    build_snapshot(
        demo.records,
        &demo.epss,
        &demo.exploit_ids,
        demo.catalog,
        chrono::NaiveDate::from_ymd_opt(2024, 1, 31).unwrap(),
    )
    .unwrap()
}

fn params() -> PipelineParams {
    PipelineParams {
        algorithm: ClusterAlgorithm::Dbscan {
            eps: 0.4,
            min_samples: 3,
        },
        hyperparams: Hyperparams {
            tree_count: 20,
            ..Hyperparams::default()
        },
        ..PipelineParams::default()
    }
}

async fn spawn_server(initial: Option<CorpusSnapshot>) -> std::net::SocketAddr {
    let state = AppState::new(initial, params()).unwrap();
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, router(state)).await.unwrap();
    });
    addr
}

async fn request(addr: std::net::SocketAddr, raw: &str) -> (u16, serde_json::Value) {
    let mut stream = TcpStream::connect(addr).await.unwrap();
    stream.write_all(raw.as_bytes()).await.unwrap();
    let mut buf = Vec::new();
    stream.read_to_end(&mut buf).await.unwrap();
    let text = String::from_utf8_lossy(&buf);
    let status: u16 = text
        .split_whitespace()
        .nth(1)
        .expect("status line")
        .parse()
        .expect("numeric status");
    let body_start = text.find("\r\n\r\n").expect("header terminator") + 4;
    let body = serde_json::from_str(text[body_start..].trim()).unwrap_or(serde_json::Value::Null);
    (status, body)
}

async fn get(addr: std::net::SocketAddr, path: &str) -> (u16, serde_json::Value) {
    request(
        addr,
        &format!("GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n"),
    )
    .await
}

async fn post_json(
    addr: std::net::SocketAddr,
    path: &str,
    body: &serde_json::Value,
) -> (u16, serde_json::Value) {
    let payload = serde_json::to_string(body).unwrap();
    request(
        addr,
        &format!(
            "POST {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\
             Content-Type: application/json\r\nContent-Length: {}\r\n\r\n{payload}",
            payload.len()
        ),
    )
    .await
}

#[tokio::test]
async fn health_reports_no_snapshot_before_load() {
    let addr = spawn_server(None).await;
    let (status, body) = get(addr, "/health").await;
    assert_eq!(status, 200);
    assert_eq!(body["status"], "no snapshot");
}

#[tokio::test]
async fn advise_without_snapshot_is_a_conflict() {
    let addr = spawn_server(None).await;
    let (status, body) = get(addr, "/advise?n=4").await;
    assert_eq!(status, 409);
    assert_eq!(body["error"], "no snapshot loaded");
}

#[tokio::test]
async fn advise_validates_n_and_policy() {
    let addr = spawn_server(Some(demo_snapshot())).await;
    let (status, _) = get(addr, "/advise?n=99").await;
    assert_eq!(status, 400);
    let (status, _) = get(addr, "/advise?n=0").await;
    assert_eq!(status, 400);
    let (status, body) = get(addr, "/advise?n=3&policy=bogus").await;
    assert_eq!(status, 400);
    assert!(body["error"].as_str().unwrap().contains("policy"));
}

#[tokio::test]
async fn concurrent_reads_see_the_same_snapshot() {
    let addr = spawn_server(Some(demo_snapshot())).await;
    let (a, b) = tokio::join!(get(addr, "/advise?n=3"), get(addr, "/advise?n=3"));
    assert_eq!(a.0, 200);
    assert_eq!(b.0, 200);
    assert_eq!(a.1, b.1, "identical bodies for the same snapshot id");
    assert_eq!(a.1["snapshot_id"], 1);
    assert_eq!(a.1["configurations"], 560);
}

#[tokio::test]
async fn post_snapshot_swaps_atomically_and_bumps_the_id() {
    let addr = spawn_server(Some(demo_snapshot())).await;
    let (_, before) = get(addr, "/health").await;
    assert_eq!(before["snapshot_id"], 1);

    let feed = r#"{"id":"CVE-2024-5001","description":"heap overflow in the frame parser daemon","published":"2024-02-01","modified":"2024-02-10","status":"Analyzed","cvss_base":8.1,"cvss_version":"3.1","products":["debian:debian_linux:12"],"patched":false,"exploited":false}"#;
    let payload = serde_json::json!({
        "as_of": "2024-02-28",
        "cve_jsonl": feed,
    });
    let (status, body) = post_json(addr, "/snapshot", &payload).await;
    assert_eq!(status, 200, "{body}");
    assert_eq!(body["snapshot_id"], 2);
    assert_eq!(body["records"], 1);

    let (_, after) = get(addr, "/health").await;
    assert_eq!(after["snapshot_id"], 2);
    let (status, advice) = get(addr, "/advise?n=2&policy=security-first").await;
    assert_eq!(status, 200);
    assert_eq!(advice["snapshot_id"], 2);
}

#[tokio::test]
async fn bad_snapshot_payload_keeps_the_old_state() {
    let addr = spawn_server(Some(demo_snapshot())).await;
    let payload = serde_json::json!({
        "as_of": "2024-02-28",
        "cve_jsonl": "{ not json lines }",
    });
    let (status, _) = post_json(addr, "/snapshot", &payload).await;
    assert_eq!(status, 400);
    let (_, health) = get(addr, "/health").await;
    assert_eq!(health["snapshot_id"], 1, "failed swap must not clobber state");
}

#[tokio::test]
async fn arc_swap_shares_state_across_tasks() {
    // Regression guard for the state wiring: the same Arc<AppState> serves
    // every connection, so a swap in one task is visible to the next read.
    let state = AppState::new(Some(demo_snapshot()), params()).unwrap();
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let serving = Arc::clone(&state);
    tokio::spawn(async move {
        axum::serve(listener, router(serving)).await.unwrap();
    });
    let (status, body) = get(addr, "/health").await;
    assert_eq!(status, 200);
    assert_eq!(body["status"], "ok");
}
