use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::multipart::Multipart;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{DefaultBodyLimit, Path as UrlPath, Query, State};
use axum::http::header;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use edgeguard_core::risk::RiskLevel;
use edgeguard_core::runtime::parse_replay;
use edgeguard_core::storage::{AlertPage, AlertQuery, AlertRecord, Backend, SessionRecord};
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ErrorCode};
use crate::session::{BackendRuntime, StatsView};
use crate::Service;

#[derive(Clone)]
struct Ctx {
    service: Arc<Service>,
    backend: Backend,
}

impl Ctx {
    fn runtime(&self) -> &Arc<BackendRuntime> {
        self.service.backend(self.backend)
    }
}

pub fn api_prefix(b: Backend) -> &'static str {
    match b {
        Backend::Skeleton => "/skel-api",
        Backend::Vlm => "/api",
    }
}

pub fn ws_prefix(b: Backend) -> &'static str {
    match b {
        Backend::Skeleton => "/skel-ws",
        Backend::Vlm => "/ws",
    }
}

pub fn router(service: Arc<Service>) -> Router {
    let upload_limit = (service.config().service.max_upload_mb as usize).saturating_mul(1 << 20);
    let mut app = Router::new().route("/healthz", get(|| async { "ok" }));
    for backend in Backend::ALL {
        let ctx = Ctx { service: service.clone(), backend };
        let api = Router::new()
            .route("/stream/start", post(start))
            .route("/stream/stop", post(stop))
            .route("/alerts", get(list_alerts))
            .route("/alerts/{id}", get(get_alert))
            .route("/alerts/{id}/clip", get(clip))
            .route("/alerts/{id}/thumbnail", get(thumbnail))
            .route("/sessions", get(sessions))
            .route("/stats", get(stats))
            .route("/upload", post(upload).layer(DefaultBodyLimit::max(upload_limit)))
            .with_state(ctx.clone());
        let ws = Router::new().route("/live", get(live)).with_state(ctx);
        app = app.nest(api_prefix(backend), api).nest(ws_prefix(backend), ws);
    }
    app
}

#[derive(Debug, Deserialize)]
struct StartBody {
    source: String,
}

async fn start(State(ctx): State<Ctx>, body: Bytes) -> Result<Json<SessionRecord>, ApiError> {
    let body: StartBody =
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request(format!("expected {{\"source\": ...}}: {e}")))?;
    let rt = ctx.runtime().clone();
    let session = tokio::task::spawn_blocking(move || rt.start(&body.source))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(session))
}

async fn stop(State(ctx): State<Ctx>) -> Result<Json<SessionRecord>, ApiError> {
    let rt = ctx.runtime().clone();
    let session = tokio::task::spawn_blocking(move || rt.stop()).await.map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(session))
}

#[derive(Debug, Default, Deserialize)]
struct AlertParams {
    limit: Option<usize>,
    offset: Option<usize>,
    level: Option<String>,
}

async fn list_alerts(
    State(ctx): State<Ctx>,
    params: Result<Query<AlertParams>, axum::extract::rejection::QueryRejection>,
) -> Result<Json<AlertPage>, ApiError> {
    let Query(p) = params.map_err(|e| ApiError::bad_request(e.body_text()))?;
    let level = match p.level.as_deref().map(str::trim).filter(|l| !l.is_empty()) {
        None => None,
        Some(l) => Some(
            serde_json::from_value::<RiskLevel>(serde_json::Value::String(l.to_ascii_uppercase()))
                .map_err(|_| ApiError::bad_request(format!("unknown level {l:?}")))?,
        ),
    };
    let q = AlertQuery { limit: p.limit, offset: p.offset.unwrap_or(0), level, backend: Some(ctx.backend) };
    Ok(Json(ctx.service.store().list_alerts(&q)))
}

fn find_alert(ctx: &Ctx, id: &str) -> Result<AlertRecord, ApiError> {
    ctx.service
        .store()
        .get_alert(id)
        .filter(|a| a.backend == ctx.backend)
        .ok_or_else(|| ApiError::not_found(format!("no {} alert {id}", ctx.backend)))
}

async fn get_alert(State(ctx): State<Ctx>, UrlPath(id): UrlPath<String>) -> Result<Json<AlertRecord>, ApiError> {
    Ok(Json(find_alert(&ctx, &id)?))
}

async fn artifact(path: &Path, content_type: &'static str) -> Result<Response, ApiError> {
    let bytes = tokio::fs::read(path)
        .await
        .map_err(|e| ApiError::not_found(format!("artifact {}: {e}", path.display())))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact").to_string();
    Ok((
        [
            (header::CONTENT_TYPE, content_type.to_string()),
            (header::CONTENT_DISPOSITION, format!("attachment; filename=\"{name}\"")),
        ],
        bytes,
    )
        .into_response())
}

async fn clip(State(ctx): State<Ctx>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let a = find_alert(&ctx, &id)?;
    artifact(&a.clip_path, "application/x-egclip").await
}

async fn thumbnail(State(ctx): State<Ctx>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let a = find_alert(&ctx, &id)?;
    artifact(&a.thumbnail_path, "image/png").await
}

async fn sessions(State(ctx): State<Ctx>) -> Json<Vec<SessionRecord>> {
    let mut s: Vec<_> = ctx.service.store().sessions().into_iter().filter(|s| s.backend == ctx.backend).collect();
    s.sort_by_key(|s| std::cmp::Reverse(s.started_at));
    Json(s)
}

async fn stats(State(ctx): State<Ctx>) -> Json<StatsView> {
    Json(ctx.runtime().stats())
}

/// Returned by upload; `source` can be passed straight to `stream/start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UploadReceipt {
    pub source: String,
    pub file_name: String,
    pub bytes: usize,
    pub frames: usize,
}

const VIDEO_EXTENSIONS: &[&str] = &["mp4", "m4v", "mov", "avi", "mkv", "webm", "flv", "wmv", "mpg", "mpeg", "ts", "h264"];

fn looks_like_video(name: &str, head: &[u8]) -> bool {
    let ext = Path::new(name).extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    if ext.is_some_and(|e| VIDEO_EXTENSIONS.contains(&e.as_str())) {
        return true;
    }
    let ftyp = head.len() >= 8 && &head[4..8] == b"ftyp";
    let riff_avi = head.len() >= 12 && &head[..4] == b"RIFF" && &head[8..12] == b"AVI ";
    let ebml = head.starts_with(&[0x1a, 0x45, 0xdf, 0xa3]);
    ftyp || riff_avi || ebml
}

fn safe_name(name: &str) -> String {
    let base = Path::new(name).file_stem().and_then(|s| s.to_str()).unwrap_or("upload");
    let cleaned: String =
        base.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).take(64).collect();
    if cleaned.is_empty() { "upload".into() } else { cleaned }
}

async fn upload(State(ctx): State<Ctx>, mut form: Multipart) -> Result<Json<UploadReceipt>, ApiError> {
    let too_large = |e: axum::extract::multipart::MultipartError| {
        if e.status() == axum::http::StatusCode::PAYLOAD_TOO_LARGE {
            ApiError::new(ErrorCode::PayloadTooLarge, e.body_text())
        } else {
            ApiError::bad_request(e.body_text())
        }
    };
    let mut file = None;
    while let Some(field) = form.next_field().await.map_err(too_large)? {
        if field.file_name().is_some() || field.name() == Some("file") {
            let name = field.file_name().unwrap_or("upload.jsonl").to_string();
            file = Some((name, field.bytes().await.map_err(too_large)?));
            break;
        }
    }
    let (name, data) = file.ok_or_else(|| ApiError::bad_request("multipart form has no file field"))?;
    if looks_like_video(&name, &data) {
        return Err(ApiError::new(
            ErrorCode::UnsupportedFormat,
            format!("{name}: video decoding is not built in; upload a pose-replay JSONL file"),
        ));
    }
    let text = std::str::from_utf8(&data)
        .map_err(|_| ApiError::new(ErrorCode::UnsupportedFormat, format!("{name}: not UTF-8 pose-replay JSONL")))?;
    let frames = parse_replay(text).map_err(ApiError::from_source)?;
    if frames.is_empty() {
        return Err(ApiError::new(ErrorCode::MalformedReplay, format!("{name}: no frames")));
    }
    let dir = ctx.service.layout().recordings();
    let stored = dir.join(format!("{}_{}.jsonl", &uuid::Uuid::new_v4().simple().to_string()[..8], safe_name(&name)));
    tokio::fs::write(&stored, &data).await.map_err(|e| ApiError::internal(format!("{}: {e}", stored.display())))?;
    let stored = std::fs::canonicalize(&stored).unwrap_or(stored);
    Ok(Json(UploadReceipt { source: stored.display().to_string(), file_name: name, bytes: data.len(), frames: frames.len() }))
}

async fn live(State(ctx): State<Ctx>, ws: WebSocketUpgrade) -> impl IntoResponse {
    let rt = ctx.runtime().clone();
    ws.on_upgrade(move |socket| pump(socket, rt))
}

/// Events go out first and are never skipped; frames are taken from a
/// single-slot cell, so a slow client only ever misses frames.
async fn pump(mut socket: WebSocket, rt: Arc<BackendRuntime>) {
    let mut sub = rt.hub().subscribe();
    let hello = serde_json::json!({"type": "hello", "backend": rt.backend(), "stats": rt.stats()});
    if socket.send(Message::Text(hello.to_string().into())).await.is_err() {
        return;
    }
    loop {
        tokio::select! {
            biased;
            ev = sub.events.recv() => match ev {
                Some(text) => {
                    if socket.send(Message::Text(text.to_string().into())).await.is_err() {
                        break;
                    }
                }
                None => break,
            },
            changed = sub.frames.changed() => {
                if changed.is_err() {
                    break;
                }
                let frame = sub.frames.borrow_and_update().clone();
                if let Some(png) = frame {
                    if socket.send(Message::Binary(Bytes::from(png.to_vec()))).await.is_err() {
                        break;
                    }
                }
            }
            msg = socket.recv() => match msg {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
        }
    }
}
