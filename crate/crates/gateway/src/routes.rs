//! HTTP endpoints. Every request/response call answers with an `ApiMessage`
//! that is also published on the stream.

use std::convert::Infallible;
use std::fs;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::HeaderMap;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::Deserialize;
use serde_json::{json, Value};
use tower_http::services::ServeDir;

use crate::api::Kind;
use crate::bus::CLIENT_QUEUE;
use crate::error::ApiError;
use crate::state::{session_summary, AppState, Inner};
use ringlab_core::hostkit::{export_session, ExportFormat, HostError};
use ringlab_core::transport::{LinkError, LinkState};
use ringlab_core::{Mac, SensorConfig, MICROS_PER_SEC};

pub const CLIENT_HEADER: &str = "x-client-id";

type Shared = Arc<AppState>;
type Reply = Result<(Kind, Value), ApiError>;

pub fn router(state: Shared) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/stream", get(stream))
        .route("/operator", get(operator))
        .route("/operator/claim", post(claim))
        .route("/operator/release", post(release))
        .route("/operator/handover", post(handover))
        .route("/devices", get(devices))
        .route("/devices/{mac}/connect", post(connect))
        .route("/devices/{mac}/disconnect", post(disconnect))
        .route("/devices/{mac}/dashboard", get(dashboard))
        .route("/devices/{mac}/calibrate", post(calibrate))
        .route("/devices/{mac}/session", post(start_session).get(get_session))
        .route("/devices/{mac}/session/stop", post(stop_session))
        .route("/devices/{mac}/session/export", post(export))
        .route("/devices/{mac}/annotate", post(annotate))
        .route("/devices/{mac}/offline", post(configure_offline).get(offline_status))
        .route("/devices/{mac}/files", get(files))
        .route("/devices/{mac}/files/{id}/fetch", post(fetch));
    let app = Router::new().nest("/api", api);
    let app = match &state.config.assets {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    };
    app.with_state(state)
}

fn parse_mac(s: &str) -> Result<Mac, ApiError> {
    s.parse().map_err(ApiError::BadRequest)
}

fn client_id(headers: &HeaderMap) -> Result<String, ApiError> {
    headers
        .get(CLIENT_HEADER)
        .and_then(|v| v.to_str().ok())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .ok_or(ApiError::MissingClientId)
}

fn require_operator(g: &Inner, headers: &HeaderMap) -> Result<(), ApiError> {
    let id = client_id(headers)?;
    if g.operator.as_deref() == Some(id.as_str()) {
        Ok(())
    } else {
        Err(ApiError::NotOperator(id))
    }
}

/// Run `f` against the shared state off the async workers.
async fn with_state(
    st: &Shared,
    f: impl FnOnce(&AppState, &mut Inner) -> Reply + Send + 'static,
) -> Reply {
    let st = st.clone();
    tokio::task::spawn_blocking(move || {
        let mut g = st.lock();
        f(&st, &mut g)
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?
}

/// Publish the outcome and answer with the same message.
fn respond(st: &AppState, mac: Option<Mac>, r: Reply) -> Response {
    match r {
        Ok((kind, body)) => Json(st.bus.publish(kind, mac, body)).into_response(),
        Err(e) => {
            let body = json!({ "code": e.code(), "message": e.to_string() });
            (e.status(), Json(st.bus.publish(Kind::Error, mac, body))).into_response()
        }
    }
}

/// Parse the path MAC, run `f`, and respond.
async fn device_call(
    st: Shared,
    mac: String,
    f: impl FnOnce(&AppState, &mut Inner, Mac) -> Reply + Send + 'static,
) -> Response {
    let mac = match parse_mac(&mac) {
        Ok(m) => m,
        Err(e) => return respond(&st, None, Err(e)),
    };
    let r = with_state(&st, move |s, g| f(s, g, mac)).await;
    respond(&st, Some(mac), r)
}

async fn health(State(st): State<Shared>) -> Json<Value> {
    let g = st.lock();
    Json(json!({
        "status": "ok",
        "virtual_time_us": g.host.radio().now_us(),
        "speed": st.config.speed,
        "subscribers": st.bus.subscribers(),
        "operator": g.operator,
        "live_sessions": g.live.keys().collect::<Vec<_>>(),
    }))
}

#[derive(Debug, Deserialize)]
struct StreamQuery {
    client: Option<String>,
}

static ANON: AtomicU64 = AtomicU64::new(0);

async fn stream(
    State(st): State<Shared>,
    Query(q): Query<StreamQuery>,
) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let id = q.client.unwrap_or_else(|| format!("anon-{}", ANON.fetch_add(1, Ordering::Relaxed)));
    let queue = st.bus.subscribe(id, CLIENT_QUEUE);
    let events = futures::stream::unfold(queue, |q| async move {
        let m = q.next().await;
        let ev = Event::default().id(m.seq.to_string()).event(m.kind.name());
        let ev = ev.json_data(&m).unwrap_or_else(|_| Event::default().comment("unserializable"));
        Some((Ok(ev), q))
    });
    Sse::new(events).keep_alive(KeepAlive::default())
}

fn operator_body(g: &Inner) -> Json<Value> {
    Json(json!({ "operator": g.operator }))
}

fn operator_error(e: ApiError) -> Response {
    (e.status(), Json(json!({ "code": e.code(), "message": e.to_string() }))).into_response()
}

async fn operator(State(st): State<Shared>) -> Json<Value> {
    operator_body(&st.lock())
}

async fn claim(State(st): State<Shared>, headers: HeaderMap) -> Response {
    let id = match client_id(&headers) {
        Ok(id) => id,
        Err(e) => return operator_error(e),
    };
    let mut g = st.lock();
    match &g.operator {
        Some(holder) if *holder != id => operator_error(ApiError::OperatorHeld(holder.clone())),
        _ => {
            g.operator = Some(id);
            operator_body(&g).into_response()
        }
    }
}

async fn release(State(st): State<Shared>, headers: HeaderMap) -> Response {
    let mut g = st.lock();
    if let Err(e) = require_operator(&g, &headers) {
        return operator_error(e);
    }
    g.operator = None;
    operator_body(&g).into_response()
}

#[derive(Debug, Deserialize)]
struct HandoverRequest {
    to: String,
}

async fn handover(State(st): State<Shared>, headers: HeaderMap, Json(req): Json<HandoverRequest>) -> Response {
    let mut g = st.lock();
    if let Err(e) = require_operator(&g, &headers) {
        return operator_error(e);
    }
    if req.to.is_empty() {
        return operator_error(ApiError::BadRequest("empty client id".into()));
    }
    g.operator = Some(req.to);
    operator_body(&g).into_response()
}

#[derive(Debug, Deserialize)]
struct ScanQuery {
    scan_ms: Option<u64>,
}

async fn devices(State(st): State<Shared>, Query(q): Query<ScanQuery>) -> Response {
    let scan_us = q.scan_ms.unwrap_or(st.config.scan_ms) * 1000;
    let r = with_state(&st, move |_, g| {
        let mut ads = g.host.discover(scan_us);
        ads.sort_by(|a, b| b.rssi.cmp(&a.rssi).then(a.mac.cmp(&b.mac)));
        let connected: Vec<Mac> = g
            .host
            .radio()
            .macs()
            .into_iter()
            .filter(|m| g.host.radio().link_state(*m) == Some(LinkState::Connected))
            .collect();
        Ok((Kind::DeviceList, json!({ "devices": ads, "connected": connected })))
    })
    .await;
    respond(&st, None, r)
}

async fn connect(State(st): State<Shared>, Path(mac): Path<String>) -> Response {
    device_call(st, mac, |_, g, mac| {
        g.host.connect(mac)?;
        Ok((Kind::Dashboard, json!(g.host.device_info(mac)?)))
    })
    .await
}

async fn disconnect(State(st): State<Shared>, Path(mac): Path<String>) -> Response {
    device_call(st, mac, |s, g, mac| {
        if g.live.contains_key(&mac) {
            if let Some(Err(e)) = g.stop(mac, &s.bus) {
                log::warn!("{mac}: stopping session before disconnect: {e}");
            }
        }
        g.host.disconnect(mac)?;
        Ok((Kind::Event, json!({ "Disconnected": mac })))
    })
    .await
}

async fn dashboard(State(st): State<Shared>, Path(mac): Path<String>) -> Response {
    device_call(st, mac, |_, g, mac| Ok((Kind::Dashboard, json!(g.host.device_info(mac)?)))).await
}

async fn calibrate(State(st): State<Shared>, Path(mac): Path<String>, headers: HeaderMap) -> Response {
    device_call(st, mac, move |_, g, mac| {
        require_operator(g, &headers)?;
        Ok((Kind::CalibReport, json!(g.host.calibrate(mac)?)))
    })
    .await
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct StartRequest {
    config: Option<SensorConfig>,
    #[serde(default)]
    duration_ms: u32,
}

async fn start_session(
    State(st): State<Shared>,
    Path(mac): Path<String>,
    headers: HeaderMap,
    body: Option<Json<StartRequest>>,
) -> Response {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    device_call(st, mac, move |_, g, mac| {
        require_operator(g, &headers)?;
        if g.live.contains_key(&mac) {
            return Err(ApiError::SessionActive(mac.to_string()));
        }
        let s = g.host.start_session(mac, req.config.unwrap_or_else(SensorConfig::reference), req.duration_ms)?;
        let body = session_summary(&s);
        g.live.insert(mac, s);
        Ok((Kind::Session, body))
    })
    .await
}

async fn get_session(State(st): State<Shared>, Path(mac): Path<String>) -> Response {
    device_call(st, mac, |_, g, mac| {
        let s = g.session(mac).ok_or_else(|| ApiError::NoSession(mac.to_string()))?;
        Ok((Kind::Session, session_summary(s)))
    })
    .await
}

async fn stop_session(State(st): State<Shared>, Path(mac): Path<String>, headers: HeaderMap) -> Response {
    device_call(st, mac, move |s, g, mac| {
        require_operator(g, &headers)?;
        g.stop(mac, &s.bus).ok_or_else(|| ApiError::NoSession(mac.to_string()))??;
        Ok((Kind::Session, session_summary(&g.finished[&mac])))
    })
    .await
}

#[derive(Debug, Deserialize)]
struct AnnotateRequest {
    tag: String,
}

async fn annotate(
    State(st): State<Shared>,
    Path(mac): Path<String>,
    headers: HeaderMap,
    Json(req): Json<AnnotateRequest>,
) -> Response {
    device_call(st, mac, move |_, g, mac| {
        require_operator(g, &headers)?;
        let Inner { host, live, .. } = g;
        let s = live.get_mut(&mac).ok_or_else(|| ApiError::NoSession(mac.to_string()))?;
        let a = host.annotate(s, &req.tag)?;
        Ok((Kind::AnnotationAck, json!({ "session_id": s.id, "timestamp_us": a.timestamp_us, "tag": a.tag })))
    })
    .await
}

#[derive(Debug, Deserialize)]
struct ExportRequest {
    #[serde(default = "csv")]
    format: ExportFormat,
}

fn csv() -> ExportFormat {
    ExportFormat::Csv
}

async fn export(
    State(st): State<Shared>,
    Path(mac): Path<String>,
    headers: HeaderMap,
    body: Option<Json<ExportRequest>>,
) -> Response {
    let format = body.map_or(ExportFormat::Csv, |Json(b)| b.format);
    device_call(st, mac, move |s, g, mac| {
        require_operator(g, &headers)?;
        let session = g.finished.get(&mac).ok_or_else(|| ApiError::NoSession(mac.to_string()))?;
        let dir = s.config.out_dir.join(&session.id);
        let meta = export_session(session, &dir, format)?;
        Ok((
            Kind::Session,
            json!({
                "session_id": meta.session_id,
                "dir": dir,
                "samples": meta.samples,
                "record_count": meta.record_count,
                "records_crc": meta.records_crc,
                "annotations": meta.annotations,
            }),
        ))
    })
    .await
}

#[derive(Debug, Deserialize)]
struct OfflineRequest {
    #[serde(default)]
    start_delay_s: u32,
    total_s: u32,
    segment_s: u32,
}

async fn configure_offline(
    State(st): State<Shared>,
    Path(mac): Path<String>,
    headers: HeaderMap,
    Json(req): Json<OfflineRequest>,
) -> Response {
    device_call(st, mac, move |_, g, mac| {
        require_operator(g, &headers)?;
        if g.live.contains_key(&mac) {
            return Err(ApiError::SessionActive(mac.to_string()));
        }
        g.host.configure_offline(mac, req.start_delay_s, req.total_s, req.segment_s)?;
        let status = g.host.offline_status(mac).ok_or_else(|| ApiError::NoSchedule(mac.to_string()))?;
        Ok((Kind::OfflineStatus, json!(status)))
    })
    .await
}

async fn offline_status(State(st): State<Shared>, Path(mac): Path<String>) -> Response {
    device_call(st, mac, |_, g, mac| {
        let status = g.host.offline_status(mac).ok_or_else(|| ApiError::NoSchedule(mac.to_string()))?;
        Ok((Kind::OfflineStatus, json!(status)))
    })
    .await
}

async fn files(State(st): State<Shared>, Path(mac): Path<String>) -> Response {
    device_call(st, mac, |_, g, mac| Ok((Kind::FileList, json!({ "files": g.host.list_files(mac)? })))).await
}

async fn fetch(State(st): State<Shared>, Path((mac, id)): Path<(String, u16)>, headers: HeaderMap) -> Response {
    device_call(st, mac, move |s, g, mac| {
        require_operator(g, &headers)?;
        let resume = g.partial.remove(&(mac, id));
        let resumed_from = resume.as_ref().map_or(0, |p| p.bytes.len());
        let started = g.host.radio().now_us();
        let mut last_pct = None;
        let r = g.host.fetch_file(mac, id, resume, |p| {
            let pct = u64::from(p.bytes) * 100 / u64::from(p.total.max(1));
            if last_pct != Some(pct) {
                last_pct = Some(pct);
                let body = json!({
                    "file_id": id,
                    "bytes": p.bytes,
                    "total": p.total,
                    "percent": pct,
                    "done": false,
                    "elapsed_virtual_s": (p.now_us - started) as f64 / MICROS_PER_SEC as f64,
                });
                s.bus.publish(Kind::FetchProgress, Some(mac), body);
            }
        });
        let elapsed = g.host.radio().now_us() - started;
        let file = match r {
            Ok(f) => f,
            Err(HostError::Interrupted { file_id, partial }) => {
                let bytes = partial.bytes.len();
                g.partial.insert((mac, file_id), *partial);
                log::info!("{mac}: file {file_id} interrupted at {bytes} bytes");
                return Err(HostError::Link(LinkError::Disconnected { offset: bytes as u32 }).into());
            }
            Err(e) => return Err(e.into()),
        };
        let path = s.config.out_dir.join(format!("{}", mac).replace(':', "")).join(format!("file-{id}.bin"));
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(HostError::from)?;
        }
        fs::write(&path, &file.payload).map_err(HostError::from)?;
        Ok((
            Kind::FetchProgress,
            json!({
                "file_id": id,
                "bytes": file.payload.len(),
                "total": file.entry.size,
                "percent": 100,
                "done": true,
                "crc": file.entry.crc,
                "records": file.records.len(),
                "resumed_from": resumed_from,
                "elapsed_virtual_s": elapsed as f64 / MICROS_PER_SEC as f64,
                "path": path,
            }),
        ))
    })
    .await
}
