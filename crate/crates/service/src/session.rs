//! Session lifecycle for one backend: start, stop, automatic completion,
//! alert persistence, and live publication.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use chrono::Utc;
use crossbeam_channel::{bounded, Receiver, RecvTimeoutError, Sender};
use edgeguard_core::config::AppConfig;
use edgeguard_core::risk::{RiskAssessment, RiskLevel};
use edgeguard_core::runtime::{
    open_source, spawn_pipeline, AlertDraft, MetricsHub, MetricsSnapshot, PipelineDeps, PipelineSink,
    SourceDescriptor,
};
use edgeguard_core::storage::{AlertRecord, AlertStore, Backend, SessionRecord, StorageLayout};
use edgeguard_core::vlm::{spawn_vlm_session, VlmAlert, VlmSink, VlmVerdict};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{ApiError, ErrorCode};
use crate::live::LiveHub;

const STATS_TICK: Duration = Duration::from_secs(1);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsView {
    pub backend: Backend,
    pub running: bool,
    /// The running session, else the most recent one.
    pub session: Option<SessionRecord>,
    pub metrics: MetricsSnapshot,
    pub subscribers: usize,
}

struct Running {
    session: SessionRecord,
    stop: Arc<AtomicBool>,
    stopping: bool,
    done: Receiver<SessionRecord>,
    ticker: Option<Sender<()>>,
}

struct State {
    running: Option<Running>,
    last: Option<SessionRecord>,
    metrics: Arc<MetricsHub>,
}

pub struct BackendRuntime {
    backend: Backend,
    config: Arc<AppConfig>,
    layout: StorageLayout,
    store: Arc<dyn AlertStore>,
    hub: Arc<LiveHub>,
    state: Mutex<State>,
}

impl BackendRuntime {
    pub fn new(backend: Backend, config: Arc<AppConfig>, layout: StorageLayout, store: Arc<dyn AlertStore>) -> Arc<Self> {
        let last = store.sessions().into_iter().filter(|s| s.backend == backend).max_by_key(|s| s.started_at);
        Arc::new(BackendRuntime {
            backend,
            config,
            layout,
            store,
            hub: LiveHub::new(),
            state: Mutex::new(State { running: None, last, metrics: MetricsHub::new() }),
        })
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn hub(&self) -> &Arc<LiveHub> {
        &self.hub
    }

    pub fn is_running(&self) -> bool {
        self.state.lock().running.is_some()
    }

    /// Relative replay paths that do not exist as given are looked up
    /// under `recordings/`.
    pub fn resolve(&self, raw: &str) -> SourceDescriptor {
        match SourceDescriptor::parse(raw) {
            SourceDescriptor::Replay { path } if path.is_relative() && !path.exists() => {
                let stored = self.layout.recordings().join(&path);
                SourceDescriptor::Replay { path: if stored.exists() { stored } else { path } }
            }
            other => other,
        }
    }

    pub fn start(self: &Arc<Self>, raw_source: &str) -> Result<SessionRecord, ApiError> {
        if raw_source.trim().is_empty() {
            return Err(ApiError::new(ErrorCode::BadSource, "source is empty"));
        }
        let mut state = self.state.lock();
        if let Some(r) = &state.running {
            return Err(ApiError::new(
                ErrorCode::AlreadyRunning,
                format!("{} session {} is already running", self.backend, r.session.session_id),
            ));
        }
        let desc = self.resolve(raw_source);
        let source = open_source(&desc, self.config.skel.nominal_fps).map_err(ApiError::from_source)?;

        let session = SessionRecord::start(self.backend, raw_source.trim());
        let metrics = MetricsHub::new();
        let sink = Arc::new(ServiceSink {
            backend: self.backend,
            session_id: session.session_id.clone(),
            store: self.store.clone(),
            hub: self.hub.clone(),
        });
        let alert_dir = Some(self.layout.alerts_for(self.backend));
        let (stop, join): (Arc<AtomicBool>, Box<dyn FnOnce() -> serde_json::Value + Send>) = match self.backend {
            Backend::Skeleton => {
                let cfg = &self.config.skel;
                let h = spawn_pipeline(source, cfg, PipelineDeps::from_config(cfg), alert_dir, sink, metrics.clone())
                    .map_err(|e| ApiError::bad_request(e.to_string()))?;
                (h.stop_flag(), Box::new(move || serde_json::to_value(h.join()).unwrap_or_default()))
            }
            Backend::Vlm => {
                let h = spawn_vlm_session(source, &self.config.vlm, alert_dir, sink, metrics.clone())
                    .map_err(|e| ApiError::bad_request(e.to_string()))?;
                (h.stop_flag(), Box::new(move || serde_json::to_value(h.join()).unwrap_or_default()))
            }
        };
        if let Err(e) = self.store.put_session(&session) {
            tracing::warn!("session {} not persisted: {e}", session.session_id);
        }

        let (done_tx, done_rx) = bounded(1);
        let (tick_tx, tick_rx) = bounded::<()>(0);
        let this = self.clone();
        let id = session.session_id.clone();
        std::thread::Builder::new()
            .name(format!("{}-supervisor", self.backend.dir_name()))
            .spawn(move || {
                let report = join();
                this.finish(&id, report, done_tx);
            })
            .map_err(|e| ApiError::internal(e.to_string()))?;
        let this = self.clone();
        let tick_metrics = metrics.clone();
        std::thread::Builder::new()
            .name(format!("{}-stats", self.backend.dir_name()))
            .spawn(move || {
                while let Err(RecvTimeoutError::Timeout) = tick_rx.recv_timeout(STATS_TICK) {
                    this.publish_stats(true, tick_metrics.snapshot());
                }
            })
            .map_err(|e| ApiError::internal(e.to_string()))?;

        state.metrics = metrics;
        state.running =
            Some(Running { session: session.clone(), stop, stopping: false, done: done_rx, ticker: Some(tick_tx) });
        drop(state);
        self.hub.publish_event(&json!({"type": "session", "backend": self.backend, "state": "started", "session": session}));
        tracing::info!("{} session {} started on {raw_source}", self.backend, session.session_id);
        Ok(session)
    }

    /// Stops the producer and waits for the session to drain. Blocks.
    pub fn stop(&self) -> Result<SessionRecord, ApiError> {
        let done = {
            let mut state = self.state.lock();
            match state.running.as_mut() {
                Some(r) if !r.stopping => {
                    r.stopping = true;
                    r.stop.store(true, Ordering::SeqCst);
                    r.done.clone()
                }
                _ => return Err(ApiError::new(ErrorCode::NotRunning, format!("no {} session is running", self.backend))),
            }
        };
        done.recv().map_err(|_| ApiError::internal("session supervisor vanished"))
    }

    fn finish(&self, session_id: &str, report: serde_json::Value, done: Sender<SessionRecord>) {
        let (session, snapshot) = {
            let mut state = self.state.lock();
            let Some(mut running) = state.running.take_if(|r| r.session.session_id == session_id) else {
                return;
            };
            running.ticker.take();
            let mut session = running.session;
            session.stopped_at = Some(Utc::now().max(session.started_at));
            session.report = Some(report);
            if let Err(e) = self.store.put_session(&session) {
                tracing::warn!("session {session_id} not persisted: {e}");
            }
            state.last = Some(session.clone());
            (session, state.metrics.snapshot())
        };
        self.publish_stats(false, snapshot);
        self.hub.publish_event(&json!({"type": "session", "backend": self.backend, "state": "stopped", "session": session}));
        tracing::info!("{} session {session_id} finished", self.backend);
        let _ = done.send(session);
    }

    fn publish_stats(&self, running: bool, metrics: MetricsSnapshot) {
        self.hub.publish_event(&json!({"type": "stats", "backend": self.backend, "running": running, "metrics": metrics}));
    }

    pub fn stats(&self) -> StatsView {
        let state = self.state.lock();
        StatsView {
            backend: self.backend,
            running: state.running.is_some(),
            session: state.running.as_ref().map(|r| r.session.clone()).or_else(|| state.last.clone()),
            metrics: state.metrics.snapshot(),
            subscribers: self.hub.subscribers(),
        }
    }

    /// Stops a running session, if any, and waits for it.
    pub fn shutdown(&self) {
        let _ = self.stop();
    }
}

struct ServiceSink {
    backend: Backend,
    session_id: String,
    store: Arc<dyn AlertStore>,
    hub: Arc<LiveHub>,
}

impl ServiceSink {
    #[allow(clippy::too_many_arguments)]
    fn persist(
        &self,
        level: RiskLevel,
        summary: &str,
        clip: Option<&Path>,
        thumb: Option<&Path>,
        frame_span: (u64, u64),
        event_ts_ms: i64,
        extra: serde_json::Value,
    ) {
        let (Some(clip), Some(thumb)) = (clip, thumb) else {
            tracing::warn!("{} alert without artifacts not persisted", self.backend);
            return;
        };
        let record = AlertRecord {
            alert_id: uuid::Uuid::new_v4().to_string(),
            session_id: self.session_id.clone(),
            created_at: Utc::now(),
            level,
            summary: summary.to_string(),
            clip_path: PathBuf::from(clip),
            thumbnail_path: PathBuf::from(thumb),
            backend: self.backend,
            frame_span,
            event_ts_ms,
            extra,
        };
        match self.store.insert_alert(record.clone()) {
            Ok(()) => self.hub.publish_event(&json!({"type": "alert", "backend": self.backend, "alert": record})),
            Err(e) => tracing::warn!("alert not persisted: {e}"),
        }
    }
}

impl PipelineSink for ServiceSink {
    fn on_alert(&self, a: &AlertDraft) {
        let extra = json!({
            "track_ids": a.track_ids,
            "danger_mass": a.danger_mass,
            "warning_mass": a.warning_mass,
            "top_class": a.top_class,
            "top_prob": a.top_prob,
            "event_frame": a.event_frame,
            "peak_frame": a.peak_frame,
            "clip_frames": a.clip_frames,
            "clip_truncated": a.clip_truncated,
        });
        self.persist(a.level, &a.summary, a.clip_path.as_deref(), a.thumbnail_path.as_deref(), a.frame_span, a.event_ts_ms, extra);
    }

    fn on_assessment(&self, a: &RiskAssessment) {
        self.hub.publish_event(&json!({"type": "assessment", "backend": self.backend, "assessment": a}));
    }

    fn wants_frames(&self) -> bool {
        self.hub.subscribers() > 0
    }

    fn on_frame(&self, _frame_index: u64, png: Arc<Vec<u8>>) {
        self.hub.publish_frame(png);
    }
}

impl VlmSink for ServiceSink {
    fn on_verdict(&self, v: &VlmVerdict) {
        self.hub.publish_event(&json!({
            "type": "verdict",
            "backend": self.backend,
            "chunk_index": v.chunk_index,
            "level": v.level,
            "summary": v.summary,
            "parse_mode": v.parse_mode,
        }));
    }

    fn on_alert(&self, a: &VlmAlert) {
        let extra = json!({
            "parse_mode": a.parse_mode,
            "chunk_index": a.chunk_index,
            "time_span": a.time_span,
            "event_frame": a.event_frame,
        });
        self.persist(a.level, &a.summary, a.clip_path.as_deref(), a.thumbnail_path.as_deref(), a.frame_span, a.event_ts_ms, extra);
    }

    fn wants_frames(&self) -> bool {
        self.hub.subscribers() > 0
    }

    fn on_frame(&self, _frame_index: u64, png: Arc<Vec<u8>>) {
        self.hub.publish_frame(png);
    }
}
