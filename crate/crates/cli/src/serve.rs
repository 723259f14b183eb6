//! Advisory service: a small HTTP surface so a controller can query
//! recommendations without shelling out.
//!
//! Reads serve a consistent immutable snapshot; `POST /snapshot` builds the
//! replacement state off to the side and swaps it in atomically.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Json, Response};
use axum::routing::{get, post};
use axum::Router;
use chrono::NaiveDate;
use serde::Deserialize;
use serde_json::{json, Value};

use riskmgr_core::cluster::shared_groups;
use riskmgr_core::configurator::{advise, Policy};
use riskmgr_core::corpus::{
    self, build_snapshot, load_catalog, parse_cve_feed, parse_epss_csv, parse_exploit_index,
    CorpusSnapshot, CveId,
};
use riskmgr_core::error::{Error, Result};
use riskmgr_core::pipeline::{run_pipeline, PipelineParams, REPORT_SCHEMA_VERSION};
use riskmgr_core::scoring::AssessedScore;

/// One fully evaluated snapshot; replaced wholesale, never mutated.
pub struct LoadedState {
    pub snapshot_id: u64,
    pub snapshot: CorpusSnapshot,
    pub assessed: std::collections::BTreeMap<CveId, AssessedScore>,
    pub groups: Vec<BTreeSet<CveId>>,
}

pub struct AppState {
    current: RwLock<Option<Arc<LoadedState>>>,
    next_id: AtomicU64,
    params: PipelineParams,
}

impl AppState {
    pub fn new(initial: Option<CorpusSnapshot>, params: PipelineParams) -> Result<Arc<Self>> {
        let state = Arc::new(AppState {
            current: RwLock::new(None),
            next_id: AtomicU64::new(1),
            params,
        });
        if let Some(snapshot) = initial {
            let loaded = state.evaluate(snapshot)?;
            *state.current.write().expect("lock poisoned") = Some(Arc::new(loaded));
        }
        Ok(state)
    }

    fn evaluate(&self, snapshot: CorpusSnapshot) -> Result<LoadedState> {
        let output = run_pipeline(&snapshot, &self.params)?;
        Ok(LoadedState {
            snapshot_id: self.next_id.fetch_add(1, Ordering::SeqCst),
            groups: shared_groups(&output.clusters),
            assessed: output.assessed,
            snapshot,
        })
    }

    fn current(&self) -> Option<Arc<LoadedState>> {
        self.current.read().expect("lock poisoned").clone()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/advise", get(advise_handler))
        .route("/snapshot", post(snapshot_handler))
        .with_state(state)
}

/// Bind and serve until the process is stopped.
pub async fn run(
    listen: &str,
    initial: Option<CorpusSnapshot>,
    params: PipelineParams,
) -> Result<()> {
    let state = AppState::new(initial, params)?;
    let listener = tokio::net::TcpListener::bind(listen).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .await
        .map_err(|e| Error::Io(std::io::Error::other(e)))
}

fn error_body(status: StatusCode, message: impl Into<String>) -> Response {
    (
        status,
        Json(json!({ "version": REPORT_SCHEMA_VERSION, "error": message.into() })),
    )
        .into_response()
}

async fn health(State(state): State<Arc<AppState>>) -> Response {
    match state.current() {
        Some(loaded) => Json(json!({
            "version": REPORT_SCHEMA_VERSION,
            "status": "ok",
            "snapshot_id": loaded.snapshot_id,
            "records": loaded.snapshot.records().len(),
        }))
        .into_response(),
        None => Json(json!({
            "version": REPORT_SCHEMA_VERSION,
            "status": "no snapshot",
        }))
        .into_response(),
    }
}

#[derive(Deserialize)]
struct AdviseQuery {
    n: Option<usize>,
    policy: Option<String>,
    alpha: Option<f64>,
}

fn parse_policy(query: &AdviseQuery) -> std::result::Result<Policy, String> {
    match query.policy.as_deref() {
        None | Some("resilience-first") => Ok(Policy::ResilienceFirst),
        Some("security-first") => Ok(Policy::SecurityFirst),
        Some("weighted") => Ok(Policy::Weighted(query.alpha.unwrap_or(0.5))),
        Some(other) => Err(format!("unknown policy {other:?}")),
    }
}

async fn advise_handler(
    State(state): State<Arc<AppState>>,
    Query(query): Query<AdviseQuery>,
) -> Response {
    let Some(loaded) = state.current() else {
        return error_body(StatusCode::CONFLICT, "no snapshot loaded");
    };
    let policy = match parse_policy(&query) {
        Ok(p) => p,
        Err(message) => return error_body(StatusCode::BAD_REQUEST, message),
    };
    let n = query.n.unwrap_or(state.params.nodes);
    let catalog_len = loaded.snapshot.catalog().len();
    if n < 1 || n > catalog_len {
        return error_body(
            StatusCode::BAD_REQUEST,
            format!("n must be in 1..={catalog_len}"),
        );
    }
    let ranking = match advise(
        loaded.snapshot.catalog(),
        n,
        policy,
        &loaded.assessed,
        &loaded.snapshot,
        &loaded.groups,
        false,
    ) {
        Ok(r) => r,
        Err(e) => return error_body(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let rows: Vec<Value> = ranking
        .iter()
        .take(10)
        .enumerate()
        .map(|(i, report)| {
            json!({
                "rank": i + 1,
                "nodes": report.configuration.names(),
                "security": report.security,
                "resilience": report.resilience,
            })
        })
        .collect();
    Json(json!({
        "version": REPORT_SCHEMA_VERSION,
        "snapshot_id": loaded.snapshot_id,
        "n": n,
        "configurations": ranking.len(),
        "head": rows.first().cloned().unwrap_or(Value::Null),
        "top": rows,
    }))
    .into_response()
}

/// Feed payload for rebuilding the service state.
#[derive(Deserialize)]
struct SnapshotPayload {
    as_of: NaiveDate,
    /// JSON Lines text, same layout as the feed file.
    cve_jsonl: String,
    #[serde(default)]
    epss_csv: Option<String>,
    #[serde(default)]
    exploits_csv: Option<String>,
    /// Catalog JSON text; the built-in catalog when omitted.
    #[serde(default)]
    catalog_json: Option<String>,
}

async fn snapshot_handler(
    State(state): State<Arc<AppState>>,
    Json(payload): Json<SnapshotPayload>,
) -> Response {
    let built = build_from_payload(&payload).and_then(|snapshot| state.evaluate(snapshot));
    match built {
        Ok(loaded) => {
            let id = loaded.snapshot_id;
            let records = loaded.snapshot.records().len();
            *state.current.write().expect("lock poisoned") = Some(Arc::new(loaded));
            Json(json!({
                "version": REPORT_SCHEMA_VERSION,
                "snapshot_id": id,
                "records": records,
            }))
            .into_response()
        }
        Err(e) => error_body(StatusCode::BAD_REQUEST, e.to_string()),
    }
}

fn build_from_payload(payload: &SnapshotPayload) -> Result<CorpusSnapshot> {
    let records = parse_cve_feed(payload.cve_jsonl.as_bytes())?;
    let epss = match &payload.epss_csv {
        Some(text) => parse_epss_csv(text.as_bytes(), payload.as_of)?.entries,
        None => Vec::new(),
    };
    let exploited = match &payload.exploits_csv {
        Some(text) => parse_exploit_index(text.as_bytes())?.ids,
        None => Default::default(),
    };
    let catalog = match &payload.catalog_json {
        Some(text) => load_catalog(text.as_bytes())?,
        None => corpus::default_catalog(),
    };
    build_snapshot(records, &epss, &exploited, catalog, payload.as_of)
}
