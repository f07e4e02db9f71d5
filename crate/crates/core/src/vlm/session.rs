use std::collections::{BTreeMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, unbounded, Receiver, Sender};
use serde::{Deserialize, Serialize};

use super::client::{infer_chunk, ChatClient};
use super::prompt::build_prompt;
use super::verdict::{ParseMode, VlmVerdict};
use super::{sample_chunk, ChunkSample, HistoryFrame, VlmConfig};
use crate::error::{Error, Result};
use crate::risk::RiskLevel;
use crate::runtime::artifact::{write_clip, ClipFrame, ClipHeader, CLIP_EXT};
use crate::runtime::metrics::{ClipLatency, LevelCounts, MetricsHub, MetricsSnapshot, Stage};
use crate::runtime::overlay::{encode_png, render_scene, Canvas};
use crate::runtime::{FrameSource, PoseFrame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VlmAlert {
    pub level: RiskLevel,
    pub summary: String,
    pub chunk_index: u64,
    pub parse_mode: ParseMode,
    pub frame_span: (u64, u64),
    pub time_span: (i64, i64),
    pub event_frame: u64,
    pub event_ts_ms: i64,
    pub clip_path: Option<PathBuf>,
    pub thumbnail_path: Option<PathBuf>,
}

/// What was sent for one chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkInfo {
    pub chunk_index: u64,
    pub endpoint: usize,
    pub now_ms: i64,
    pub time_span: (i64, i64),
    pub action_frames: usize,
    pub context_frames: usize,
    pub with_previous_summary: bool,
}

pub trait VlmSink: Send + Sync {
    fn on_verdict(&self, _verdict: &VlmVerdict) {}
    fn on_alert(&self, _alert: &VlmAlert) {}
    fn wants_frames(&self) -> bool {
        false
    }
    fn on_frame(&self, _frame_index: u64, _png: Arc<Vec<u8>>) {}
}

pub struct NullVlmSink;
impl VlmSink for NullVlmSink {}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct VlmReport {
    pub source: String,
    pub frames_in: u64,
    pub chunks: Vec<ChunkInfo>,
    pub verdicts: Vec<VlmVerdict>,
    pub verdicts_by_level: LevelCounts,
    pub alerts_by_level: LevelCounts,
    pub alerts: Vec<VlmAlert>,
    pub inference_errors: u64,
    pub stopped_early: bool,
    pub error: Option<String>,
    pub metrics: MetricsSnapshot,
}

pub struct VlmHandle {
    metrics: Arc<MetricsHub>,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<VlmReport>>,
}

impl VlmHandle {
    pub fn metrics(&self) -> &Arc<MetricsHub> {
        &self.metrics
    }

    pub fn stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
    }

    pub fn stop_flag(&self) -> Arc<AtomicBool> {
        self.stop.clone()
    }

    pub fn is_finished(&self) -> bool {
        self.thread.as_ref().is_none_or(|t| t.is_finished())
    }

    pub fn join(mut self) -> VlmReport {
        self.thread.take().expect("joined once").join().expect("vlm session thread panicked")
    }
}

pub fn run_vlm_session(
    source: FrameSource,
    cfg: &VlmConfig,
    alert_dir: Option<PathBuf>,
    sink: Arc<dyn VlmSink>,
) -> Result<VlmReport> {
    Ok(spawn_vlm_session(source, cfg, alert_dir, sink, MetricsHub::new())?.join())
}

pub fn spawn_vlm_session(
    source: FrameSource,
    cfg: &VlmConfig,
    alert_dir: Option<PathBuf>,
    sink: Arc<dyn VlmSink>,
    metrics: Arc<MetricsHub>,
) -> Result<VlmHandle> {
    cfg.validate()?;
    if let Some(dir) = &alert_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let stop = Arc::new(AtomicBool::new(false));
    let (cfg, m, s) = (cfg.clone(), metrics.clone(), stop.clone());
    let thread = std::thread::Builder::new()
        .name("vlm-session".into())
        .spawn(move || orchestrate(source, cfg, alert_dir, sink, m, s))
        .map_err(|e| Error::io("vlm session thread", e))?;
    Ok(VlmHandle { metrics, stop, thread: Some(thread) })
}

struct Job {
    chunk: ChunkSample,
    endpoint: usize,
    previous: Option<String>,
    memory_reply: Option<Sender<String>>,
}

struct Outcome {
    chunk: ChunkSample,
    verdict: VlmVerdict,
    failed: bool,
    inference_ms: f64,
}

fn orchestrate(
    source: FrameSource,
    cfg: VlmConfig,
    alert_dir: Option<PathBuf>,
    sink: Arc<dyn VlmSink>,
    metrics: Arc<MetricsHub>,
    stop: Arc<AtomicBool>,
) -> VlmReport {
    let client = ChatClient::new(&cfg);
    let (out_tx, out_rx) = unbounded::<Outcome>();
    let mut worker_tx = Vec::new();
    let mut workers = Vec::new();
    for (i, _) in cfg.endpoints.iter().enumerate() {
        let (tx, rx) = bounded::<Job>(2);
        worker_tx.push(tx);
        let (client, cfg, out_tx, metrics) = (client.clone(), cfg.clone(), out_tx.clone(), metrics.clone());
        workers.push(
            std::thread::Builder::new()
                .name(format!("vlm-endpoint-{i}"))
                .spawn(move || endpoint_worker(rx, client, cfg, out_tx, metrics))
                .expect("spawn vlm worker"),
        );
    }
    drop(out_tx);

    let (bc_tx, bc_rx) = bounded::<Arc<PoseFrame>>(4);
    let broadcaster = sink.wants_frames().then(|| {
        let (sink, canvas) = (sink.clone(), canvas_of(&cfg));
        std::thread::Builder::new()
            .name("vlm-broadcast".into())
            .spawn(move || {
                for f in bc_rx {
                    if let Ok(png) = encode_png(&render_scene(&f, canvas)) {
                        sink.on_frame(f.frame_index, Arc::new(png));
                    }
                }
            })
            .expect("spawn vlm broadcaster")
    });

    let collector = {
        let (cfg, sink, metrics) = (cfg.clone(), sink.clone(), metrics.clone());
        std::thread::Builder::new()
            .name("vlm-collector".into())
            .spawn(move || collect(out_rx, &cfg, alert_dir.as_deref(), &*sink, &metrics))
            .expect("spawn vlm collector")
    };

    let source_name = source.descriptor.to_string();
    let (chunks, error, stopped_early) =
        sample_loop(source, &cfg, &worker_tx, broadcaster.is_some().then_some(&bc_tx), &metrics, &stop);
    drop(worker_tx);
    drop(bc_tx);
    for w in workers {
        let _ = w.join();
    }
    if let Some(b) = broadcaster {
        let _ = b.join();
    }
    metrics.finish();
    let (verdicts, alerts, errors) = collector.join().expect("vlm collector panicked");
    let snap = metrics.snapshot();
    VlmReport {
        source: source_name,
        frames_in: snap.frames_in,
        chunks,
        verdicts_by_level: snap.assessments_by_level.clone(),
        alerts_by_level: snap.alerts_by_level.clone(),
        verdicts,
        alerts,
        inference_errors: errors,
        stopped_early,
        error,
        metrics: snap,
    }
}

fn canvas_of(cfg: &VlmConfig) -> Canvas {
    Canvas { width: cfg.canvas_width, height: cfg.canvas_height }
}

fn endpoint_worker(rx: Receiver<Job>, client: ChatClient, cfg: VlmConfig, out: Sender<Outcome>, metrics: Arc<MetricsHub>) {
    for job in rx {
        let started = Instant::now();
        let payload = build_prompt(&job.chunk, job.previous.as_deref(), &cfg);
        let (verdict, err) = infer_chunk(&client, &payload, &cfg);
        let inference_ms = started.elapsed().as_secs_f64() * 1000.0;
        metrics.stage(Stage::Classify, inference_ms);
        if let Some(reply) = job.memory_reply {
            let _ = reply.send(if err.is_none() { verdict.summary.clone() } else { String::new() });
        }
        debug_assert_eq!(job.endpoint, cfg.endpoint_for(job.chunk.chunk_index));
        if out.send(Outcome { chunk: job.chunk, verdict, failed: err.is_some(), inference_ms }).is_err() {
            return;
        }
    }
}

/// Reads the source, keeps the history window, and dispatches a chunk each
/// time the stream has advanced by one chunk duration.
fn sample_loop(
    source: FrameSource,
    cfg: &VlmConfig,
    workers: &[Sender<Job>],
    broadcast: Option<&Sender<Arc<PoseFrame>>>,
    metrics: &MetricsHub,
    stop: &AtomicBool,
) -> (Vec<ChunkInfo>, Option<String>, bool) {
    let canvas = canvas_of(cfg);
    let keep_ms = (cfg.history_max_sec.max(cfg.chunk_duration_sec) * 1000.0) as i64 + 1000;
    let mut history: VecDeque<HistoryFrame> = VecDeque::new();
    let mut chunks = Vec::new();
    let mut first_ts = None;
    let mut next_index = 0u64;
    let mut previous: Option<String> = None;
    let start = Instant::now();
    for item in source {
        if stop.load(Ordering::SeqCst) {
            return (chunks, None, true);
        }
        let frame = match item {
            Ok(f) => Arc::new(f),
            Err(e) => return (chunks, Some(e.to_string()), false),
        };
        let t0 = *first_ts.get_or_insert(frame.timestamp_ms);
        if cfg.paced && !pace(start, frame.timestamp_ms - t0, stop) {
            return (chunks, None, true);
        }
        metrics.frame_in();
        if let Some(bc) = broadcast {
            if bc.try_send(frame.clone()).is_err() {
                metrics.update(|s| s.overlay_frames_dropped += 1);
            }
        }
        let now = frame.timestamp_ms;
        history.push_back(HistoryFrame::from_pose(frame, canvas));
        while history.front().is_some_and(|f| f.ts_ms < now - keep_ms) {
            history.pop_front();
        }
        metrics.update(|s| s.frames_processed += 1);

        let hist = history.make_contiguous();
        let period = super::frame_period_ms(hist);
        let due = t0 as f64 + cfg.chunk_ms() * (next_index + 1) as f64 - period;
        if (now as f64) + 1e-6 < due {
            continue;
        }
        let Some(chunk) = sample_chunk(hist, now, next_index, cfg) else {
            continue;
        };
        let endpoint = cfg.endpoint_for(next_index);
        let prev = if cfg.memory_loop { previous.clone().filter(|p| !p.is_empty()) } else { None };
        chunks.push(ChunkInfo {
            chunk_index: next_index,
            endpoint,
            now_ms: now,
            time_span: chunk.time_span,
            action_frames: chunk.action_frames.len(),
            context_frames: chunk.context_frames.len(),
            with_previous_summary: prev.is_some(),
        });
        metrics.update(|s| s.clips_emitted += 1);
        next_index += 1;
        let (reply_tx, reply_rx) = if cfg.memory_loop {
            let (a, b) = bounded(1);
            (Some(a), Some(b))
        } else {
            (None, None)
        };
        let job = Job { chunk, endpoint, previous: prev, memory_reply: reply_tx };
        if workers[endpoint].send(job).is_err() {
            return (chunks, Some("vlm worker exited".into()), false);
        }
        if let Some(rx) = reply_rx {
            // the next prompt needs this chunk's summary
            previous = rx.recv().ok();
        }
    }
    (chunks, None, stop.load(Ordering::SeqCst))
}

fn pace(start: Instant, offset_ms: i64, stop: &AtomicBool) -> bool {
    let due = start + Duration::from_millis(offset_ms.max(0) as u64);
    loop {
        let now = Instant::now();
        if now >= due {
            return true;
        }
        if stop.load(Ordering::SeqCst) {
            return false;
        }
        std::thread::sleep((due - now).min(Duration::from_millis(20)));
    }
}

/// Restores chunk order, then publishes verdicts and raises alerts.
fn collect(
    rx: Receiver<Outcome>,
    cfg: &VlmConfig,
    alert_dir: Option<&Path>,
    sink: &dyn VlmSink,
    metrics: &MetricsHub,
) -> (Vec<VlmVerdict>, Vec<VlmAlert>, u64) {
    let mut pending: BTreeMap<u64, Outcome> = BTreeMap::new();
    let mut next = 0u64;
    let (mut verdicts, mut alerts, mut errors) = (Vec::new(), Vec::new(), 0u64);
    for o in rx {
        pending.insert(o.chunk.chunk_index, o);
        while let Some(o) = pending.remove(&next) {
            next += 1;
            if o.failed {
                errors += 1;
            }
            publish(o, cfg, alert_dir, sink, metrics, &mut verdicts, &mut alerts);
        }
    }
    // a worker that exited early leaves gaps; flush what arrived in order
    for (_, o) in std::mem::take(&mut pending) {
        if o.failed {
            errors += 1;
        }
        publish(o, cfg, alert_dir, sink, metrics, &mut verdicts, &mut alerts);
    }
    (verdicts, alerts, errors)
}

fn publish(
    o: Outcome,
    cfg: &VlmConfig,
    alert_dir: Option<&Path>,
    sink: &dyn VlmSink,
    metrics: &MetricsHub,
    verdicts: &mut Vec<VlmVerdict>,
    alerts: &mut Vec<VlmAlert>,
) {
    let frames = &o.chunk.action_frames;
    let frame_span = (frames.first().map_or(0, |f| f.frame_index), frames.last().map_or(0, |f| f.frame_index));
    metrics.clip(ClipLatency::new(Vec::new(), frame_span, cfg.chunk_ms(), o.inference_ms));
    metrics.update(|s| {
        s.samples_classified += 1;
        s.assessments_by_level.bump(o.verdict.level);
        if o.failed {
            s.classify_errors += 1;
        }
    });
    sink.on_verdict(&o.verdict);
    if o.verdict.level != RiskLevel::Safe {
        let last = frames.last();
        let mut alert = VlmAlert {
            level: o.verdict.level,
            summary: o.verdict.summary.clone(),
            chunk_index: o.verdict.chunk_index,
            parse_mode: o.verdict.parse_mode,
            frame_span,
            time_span: o.chunk.time_span,
            event_frame: last.map_or(0, |f| f.frame_index),
            event_ts_ms: last.map_or(0, |f| f.ts_ms),
            clip_path: None,
            thumbnail_path: None,
        };
        let written = match alert_dir {
            Some(dir) => write_artifacts(dir, &o.chunk, &alert, cfg).map(|(c, t)| {
                alert.clip_path = Some(c);
                alert.thumbnail_path = Some(t);
            }),
            None => Ok(()),
        };
        match written {
            Ok(()) => {
                metrics.update(|s| s.alerts_by_level.bump(alert.level));
                sink.on_alert(&alert);
                alerts.push(alert);
            }
            Err(e) => tracing::error!("vlm alert artifacts not written, alert dropped: {e}"),
        }
    }
    verdicts.push(o.verdict);
}

fn write_artifacts(dir: &Path, chunk: &ChunkSample, alert: &VlmAlert, cfg: &VlmConfig) -> Result<(PathBuf, PathBuf)> {
    let mut frames = Vec::with_capacity(chunk.action_frames.len());
    for f in &chunk.action_frames {
        frames.push(ClipFrame { frame_index: f.frame_index, ts_ms: f.ts_ms, png: encode_png(&f.image)? });
    }
    let (w, h) = chunk.action_frames.first().map_or((cfg.canvas_width, cfg.canvas_height), |f| f.image.dimensions());
    let stem = format!(
        "{}_{:08}_c{}_{}",
        alert.level.as_str().to_ascii_lowercase(),
        alert.event_frame,
        alert.chunk_index,
        &uuid::Uuid::new_v4().simple().to_string()[..8]
    );
    let clip_path = dir.join(format!("{stem}.{CLIP_EXT}"));
    let thumb_path = dir.join(format!("{stem}.png"));
    let header = ClipHeader {
        version: 1,
        width: w,
        height: h,
        fps: cfg.recent_fps,
        frame_count: frames.len(),
        start_frame: alert.frame_span.0,
        end_frame: alert.frame_span.1,
        start_ts_ms: alert.time_span.0,
        end_ts_ms: alert.time_span.1,
        requested_ts_ms: alert.time_span,
        truncated: false,
        level: alert.level,
        track_ids: Vec::new(),
        event_frame: alert.event_frame,
        peak_frame: alert.event_frame,
    };
    write_clip(&clip_path, &header, &frames)?;
    let thumb = frames.last().map(|f| f.png.clone()).unwrap_or_default();
    std::fs::write(&thumb_path, thumb).map_err(|e| Error::io(&thumb_path, e))?;
    Ok((clip_path, thumb_path))
}
