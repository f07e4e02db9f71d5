//! Producer / stage / classify-worker / collector threads joined by bounded
//! queues. The analysis queue blocks the producer in replay mode and drops
//! its oldest frame in live mode; overlay broadcast always drops oldest.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use crossbeam_channel::{bounded, unbounded, Receiver, SendTimeoutError, Sender, TrySendError};
use serde::{Deserialize, Serialize};

use super::artifact::{write_clip, ClipFrame, ClipHeader, CLIP_EXT};
use super::metrics::{ClipLatency, LevelCounts, MetricsHub, MetricsSnapshot, QueueDepths, Stage};
use super::overlay::{encode_png, render_overlay, Canvas, OverlayTrack};
use super::source::{FrameSource, PoseFrame};
use crate::clip::{cap_persons, make_samples, AssemblyConfig, ClipAssembler, ClipSample};
use crate::error::{Error, Result};
use crate::geometry::{remap_people, LifterHandle, LifterKind};
use crate::infer::InferenceClient;
use crate::preprocess::{prepare_batch, ClipTensor, NtuSample};
use crate::risk::{
    aggregate_risk, ActionClass, Backbone, ClassDistribution, ClassifierHandle, MockKinematicConfig,
    RiskAssessment, RiskConfig, RiskLevel,
};
use crate::tracking::{filter_detections, TrackId, Tracker, TrackerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropPolicy {
    /// Backpressure for replay and scenario sources, drop-oldest for live ones.
    Auto,
    Backpressure,
    DropOldest,
}

impl std::str::FromStr for DropPolicy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "auto" => Ok(DropPolicy::Auto),
            "backpressure" | "block" => Ok(DropPolicy::Backpressure),
            "drop_oldest" => Ok(DropPolicy::DropOldest),
            other => Err(Error::Config(format!("unknown drop policy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifierKind {
    Mock,
    External,
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mock" => Ok(ClassifierKind::Mock),
            "external" => Ok(ClassifierKind::External),
            other => Err(Error::Config(format!("unknown classifier {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub tracker: TrackerConfig,
    pub assembly: AssemblyConfig,
    pub risk: RiskConfig,
    pub mock: MockKinematicConfig,
    pub classifier: ClassifierKind,
    pub backbone: Backbone,
    pub classifier_url: String,
    pub lifter: LifterKind,
    pub lifter_url: String,
    pub lifter_model: String,
    pub request_timeout_ms: u64,
    pub analysis_queue: usize,
    pub classify_queue: usize,
    pub broadcast_queue: usize,
    pub drop_policy: DropPolicy,
    pub workers: usize,
    /// Replay at the source's timestamps instead of flat out.
    pub paced: bool,
    pub nominal_fps: f64,
    pub overlay: bool,
    pub canvas_width: u32,
    pub canvas_height: u32,
    pub alert_pre_sec: f64,
    pub alert_post_sec: f64,
    pub alert_cooldown_sec: f64,
    pub ring_capacity_sec: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            tracker: TrackerConfig::default(),
            assembly: AssemblyConfig::default(),
            risk: RiskConfig::default(),
            mock: MockKinematicConfig::default(),
            classifier: ClassifierKind::Mock,
            backbone: Backbone::ProtoGcn,
            classifier_url: "http://127.0.0.1:9000".into(),
            lifter: LifterKind::Pseudo3d,
            lifter_url: "http://127.0.0.1:9000".into(),
            lifter_model: "MotionBERT".into(),
            request_timeout_ms: 5000,
            analysis_queue: 64,
            classify_queue: 8,
            broadcast_queue: 4,
            drop_policy: DropPolicy::Auto,
            workers: 2,
            paced: true,
            nominal_fps: 30.0,
            overlay: true,
            canvas_width: 1280,
            canvas_height: 720,
            alert_pre_sec: 3.0,
            alert_post_sec: 2.0,
            alert_cooldown_sec: 5.0,
            ring_capacity_sec: 20.0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.tracker.validate()?;
        self.assembly.validate()?;
        self.risk.validate()?;
        let bad = |m: String| Err(Error::Config(m));
        if self.analysis_queue < 1 || self.classify_queue < 1 || self.broadcast_queue < 1 {
            return bad("queue capacities must be at least 1".into());
        }
        if self.workers < 1 {
            return bad("need at least one classify worker".into());
        }
        if !(self.nominal_fps > 0.0) || self.canvas_width == 0 || self.canvas_height == 0 {
            return bad("nominal_fps and canvas size must be positive".into());
        }
        for (name, v) in [
            ("alert_pre_sec", self.alert_pre_sec),
            ("alert_post_sec", self.alert_post_sec),
            ("alert_cooldown_sec", self.alert_cooldown_sec),
            ("ring_capacity_sec", self.ring_capacity_sec),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a finite non-negative number"));
            }
        }
        Ok(())
    }

    pub fn canvas(&self) -> Canvas {
        Canvas { width: self.canvas_width, height: self.canvas_height }
    }

    fn timeout(&self) -> Duration {
        Duration::from_millis(self.request_timeout_ms)
    }

    /// Builds the classifier and lifter this configuration names.
    pub fn handles(&self) -> (ClassifierHandle, LifterHandle) {
        let classifier = match self.classifier {
            ClassifierKind::Mock => ClassifierHandle::mock(self.mock),
            ClassifierKind::External => ClassifierHandle::external(
                InferenceClient::new(self.classifier_url.clone(), self.timeout()),
                self.backbone,
                self.mock.num_classes,
            ),
        };
        let lifter = match self.lifter {
            LifterKind::Pseudo3d => LifterHandle::Pseudo3d,
            LifterKind::External => LifterHandle::External {
                client: InferenceClient::new(self.lifter_url.clone(), self.timeout()),
                model: self.lifter_model.clone(),
            },
        };
        (classifier, lifter)
    }
}

/// An alert whose artifacts (if an alert directory was given) are on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertDraft {
    pub level: RiskLevel,
    pub summary: String,
    pub track_ids: Vec<TrackId>,
    pub frame_span: (u64, u64),
    pub event_frame: u64,
    pub event_ts_ms: i64,
    pub danger_mass: f64,
    pub warning_mass: f64,
    pub top_class: ActionClass,
    pub top_prob: f64,
    pub clip_path: Option<PathBuf>,
    pub thumbnail_path: Option<PathBuf>,
    pub clip_frames: (u64, u64),
    pub clip_truncated: bool,
    pub peak_frame: u64,
}

/// Receives pipeline output. Calls come from pipeline threads.
pub trait PipelineSink: Send + Sync {
    fn on_alert(&self, _alert: &AlertDraft) {}
    fn on_assessment(&self, _assessment: &RiskAssessment) {}
    fn wants_frames(&self) -> bool {
        false
    }
    fn on_frame(&self, _frame_index: u64, _png: Arc<Vec<u8>>) {}
}

pub struct NullSink;
impl PipelineSink for NullSink {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionMark {
    pub frame: u64,
    pub clips: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionReport {
    pub source: String,
    pub frames_in: u64,
    pub frames_processed: u64,
    pub frames_dropped: u64,
    pub clips_emitted: u64,
    pub samples_classified: u64,
    pub classify_errors: u64,
    pub assessments_by_level: LevelCounts,
    pub alerts_by_level: LevelCounts,
    pub alerts: Vec<AlertDraft>,
    pub emissions: Vec<EmissionMark>,
    pub stopped_early: bool,
    pub error: Option<String>,
    pub metrics: MetricsSnapshot,
}

pub struct PipelineHandle {
    metrics: Arc<MetricsHub>,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<SessionReport>>,
}

impl PipelineHandle {
    pub fn metrics(&self) -> &Arc<MetricsHub> {
        &self.metrics
    }

    /// Asks the producer to stop; queued frames are still drained.
    pub fn stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
    }

    pub fn stop_flag(&self) -> Arc<AtomicBool> {
        self.stop.clone()
    }

    pub fn is_finished(&self) -> bool {
        self.thread.as_ref().is_none_or(|t| t.is_finished())
    }

    pub fn join(mut self) -> SessionReport {
        self.thread.take().expect("joined once").join().expect("pipeline thread panicked")
    }
}

pub struct PipelineDeps {
    pub classifier: ClassifierHandle,
    pub lifter: LifterHandle,
}

impl PipelineDeps {
    pub fn from_config(cfg: &PipelineConfig) -> Self {
        let (classifier, lifter) = cfg.handles();
        PipelineDeps { classifier, lifter }
    }
}

/// Runs a session to completion on the calling thread.
pub fn run_pipeline(
    source: FrameSource,
    cfg: &PipelineConfig,
    alert_dir: Option<PathBuf>,
    sink: Arc<dyn PipelineSink>,
) -> Result<SessionReport> {
    Ok(spawn_pipeline(source, cfg, PipelineDeps::from_config(cfg), alert_dir, sink, MetricsHub::new())?.join())
}

pub fn spawn_pipeline(
    source: FrameSource,
    cfg: &PipelineConfig,
    deps: PipelineDeps,
    alert_dir: Option<PathBuf>,
    sink: Arc<dyn PipelineSink>,
    metrics: Arc<MetricsHub>,
) -> Result<PipelineHandle> {
    cfg.validate()?;
    if let Some(dir) = &alert_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let stop = Arc::new(AtomicBool::new(false));
    let cfg = cfg.clone();
    let (m, s) = (metrics.clone(), stop.clone());
    let thread = std::thread::Builder::new()
        .name("pipeline".into())
        .spawn(move || orchestrate(source, cfg, deps, alert_dir, sink, m, s))
        .map_err(|e| Error::io("pipeline thread", e))?;
    Ok(PipelineHandle { metrics, stop, thread: Some(thread) })
}

struct FrameRecord {
    frame: PoseFrame,
    tracks: Vec<OverlayTrack>,
}

struct Job {
    seq: u64,
    samples: Vec<ClipSample>,
    tensor: ClipTensor,
    started: Instant,
}

type BroadcastItem = (FrameRecord, BTreeMap<TrackId, RiskLevel>);

enum CollectorMsg {
    Frame(FrameRecord),
    Announce { seq: u64, earliest_ts: i64 },
    Result { seq: u64, samples: Vec<ClipSample>, result: Result<Vec<ClassDistribution>>, inference_ms: f64 },
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1000.0
}

fn orchestrate(
    source: FrameSource,
    cfg: PipelineConfig,
    deps: PipelineDeps,
    alert_dir: Option<PathBuf>,
    sink: Arc<dyn PipelineSink>,
    metrics: Arc<MetricsHub>,
    stop: Arc<AtomicBool>,
) -> SessionReport {
    let policy = match cfg.drop_policy {
        DropPolicy::Auto if source.is_live() => DropPolicy::DropOldest,
        DropPolicy::Auto => DropPolicy::Backpressure,
        p => p,
    };
    let source_name = source.descriptor.to_string();
    let fps = source.nominal_fps;

    let (frame_tx, frame_rx) = bounded::<PoseFrame>(cfg.analysis_queue);
    let (job_tx, job_rx) = bounded::<Job>(cfg.classify_queue);
    let (coll_tx, coll_rx) = unbounded::<CollectorMsg>();
    let (bc_tx, bc_rx) = bounded::<BroadcastItem>(cfg.broadcast_queue);

    {
        let (a, c, b) = (frame_rx.clone(), job_rx.clone(), bc_rx.clone());
        metrics.set_depth_probe(move || QueueDepths { analysis: a.len(), classify: c.len(), broadcast: b.len() });
    }

    let producer = {
        let (cfg, metrics, stop, rx) = (cfg.clone(), metrics.clone(), stop.clone(), frame_rx.clone());
        std::thread::spawn(move || produce(source, &cfg, policy, frame_tx, rx, &metrics, &stop))
    };
    let stage = {
        let (cfg, metrics, lifter, coll_tx) = (cfg.clone(), metrics.clone(), deps.lifter, coll_tx.clone());
        std::thread::spawn(move || stage_loop(frame_rx, &cfg, &lifter, job_tx, coll_tx, &metrics))
    };
    let workers: Vec<_> = (0..cfg.workers)
        .map(|_| {
            let (rx, tx, classifier, metrics) = (job_rx.clone(), coll_tx.clone(), deps.classifier.clone(), metrics.clone());
            std::thread::spawn(move || {
                for job in rx {
                    let t = Instant::now();
                    let result = classifier.classify(&job.tensor);
                    metrics.stage(Stage::Classify, ms_since(t));
                    let msg = CollectorMsg::Result {
                        seq: job.seq,
                        samples: job.samples,
                        result,
                        inference_ms: ms_since(job.started),
                    };
                    if tx.send(msg).is_err() {
                        break;
                    }
                }
            })
        })
        .collect();
    drop(job_rx);
    drop(coll_tx);

    let bc_evict = bc_rx.clone();
    let broadcaster = {
        let (sink, canvas) = (sink.clone(), cfg.canvas());
        std::thread::spawn(move || {
            for (rec, labels) in bc_rx {
                let img = render_overlay(&rec.frame, &rec.tracks, &labels, canvas);
                match encode_png(&img) {
                    Ok(png) => sink.on_frame(rec.frame.frame_index, Arc::new(png)),
                    Err(e) => tracing::warn!("overlay encode failed: {e}"),
                }
            }
        })
    };

    let mut collector = Collector::new(&cfg, fps, alert_dir, sink.clone(), metrics.clone(), (bc_tx, bc_evict));
    for msg in coll_rx {
        collector.handle(msg);
    }
    let (error, stopped_early) = producer.join().unwrap_or((Some("producer panicked".into()), false));
    let emissions = stage.join().unwrap_or_default();
    for w in workers {
        let _ = w.join();
    }
    metrics.finish();
    collector.finish();
    let alerts = std::mem::take(&mut collector.alerts);
    drop(collector);
    let _ = broadcaster.join();
    metrics.clear_depth_probe();

    let snap = metrics.snapshot();
    SessionReport {
        source: source_name,
        frames_in: snap.frames_in,
        frames_processed: snap.frames_processed,
        frames_dropped: snap.frames_dropped,
        clips_emitted: snap.clips_emitted,
        samples_classified: snap.samples_classified,
        classify_errors: snap.classify_errors,
        assessments_by_level: snap.assessments_by_level.clone(),
        alerts_by_level: snap.alerts_by_level.clone(),
        alerts,
        emissions,
        stopped_early,
        error,
        metrics: snap,
    }
}

/// Returns (source error, stopped early).
fn produce(
    source: FrameSource,
    cfg: &PipelineConfig,
    policy: DropPolicy,
    tx: Sender<PoseFrame>,
    rx: Receiver<PoseFrame>,
    metrics: &MetricsHub,
    stop: &AtomicBool,
) -> (Option<String>, bool) {
    let start = Instant::now();
    let mut ts0 = None;
    for item in source {
        if stop.load(Ordering::SeqCst) {
            return (None, true);
        }
        let mut frame = match item {
            Ok(f) => f,
            Err(e) => {
                tracing::warn!("source error: {e}");
                return (Some(e.to_string()), false);
            }
        };
        if cfg.paced {
            let t0 = *ts0.get_or_insert(frame.timestamp_ms);
            let due = start + Duration::from_millis((frame.timestamp_ms - t0).max(0) as u64);
            loop {
                let now = Instant::now();
                if now >= due {
                    break;
                }
                if stop.load(Ordering::SeqCst) {
                    return (None, true);
                }
                std::thread::sleep((due - now).min(Duration::from_millis(20)));
            }
        }
        metrics.frame_in();
        match policy {
            DropPolicy::DropOldest => loop {
                match tx.try_send(frame) {
                    Ok(()) => break,
                    Err(TrySendError::Full(f)) => {
                        if rx.try_recv().is_ok() {
                            metrics.update(|s| s.frames_dropped += 1);
                        }
                        frame = f;
                    }
                    Err(TrySendError::Disconnected(_)) => return (None, false),
                }
            },
            _ => loop {
                match tx.send_timeout(frame, Duration::from_millis(50)) {
                    Ok(()) => break,
                    Err(SendTimeoutError::Timeout(f)) => {
                        if stop.load(Ordering::SeqCst) {
                            metrics.update(|s| s.frames_dropped += 1);
                            return (None, true);
                        }
                        frame = f;
                    }
                    Err(SendTimeoutError::Disconnected(_)) => return (None, false),
                }
            },
        }
    }
    (None, stop.load(Ordering::SeqCst))
}

fn prepare(samples: &[ClipSample], lifter: &LifterHandle) -> Result<ClipTensor> {
    let ntu = samples
        .iter()
        .map(|s| {
            let people = [s.persons[0].as_slice(), s.persons[1].as_slice()];
            let remapped = match remap_people(&people, lifter) {
                Err(e) if lifter.kind() == LifterKind::External => {
                    tracing::warn!("lifter failed, using pseudo-3D: {e}");
                    remap_people(&people, &LifterHandle::Pseudo3d)
                }
                r => r,
            }?;
            let [p0, p1]: [Vec<_>; 2] =
                remapped.try_into().map_err(|_| Error::Shape("expected two person slots".into()))?;
            NtuSample::new(p0, p1)
        })
        .collect::<Result<Vec<_>>>()?;
    prepare_batch(&ntu)
}

fn stage_loop(
    rx: Receiver<PoseFrame>,
    cfg: &PipelineConfig,
    lifter: &LifterHandle,
    job_tx: Sender<Job>,
    coll_tx: Sender<CollectorMsg>,
    metrics: &MetricsHub,
) -> Vec<EmissionMark> {
    let start = Instant::now();
    let mut tracker = Tracker::new(cfg.tracker);
    let mut assembler = ClipAssembler::new(cfg.assembly);
    let mut seq = 0u64;
    let mut marks = Vec::new();
    for frame in rx {
        let t = Instant::now();
        let dets = cap_persons(filter_detections(&frame.detections, &cfg.tracker), cfg.assembly.max_persons);
        let matches = tracker.step(&dets, frame.frame_index);
        metrics.stage(Stage::Track, ms_since(t));

        let t = Instant::now();
        let poses: Vec<_> = matches.iter().map(|m| (m.track_id, m.detection.pose)).collect();
        let emitted = assembler.ingest_frame(&poses, frame.frame_index, frame.timestamp_ms);
        for id in tracker.removed_last_step() {
            assembler.remove(*id);
        }
        assembler.prune_lost();
        let samples = make_samples(&emitted, &cfg.assembly);
        metrics.stage(Stage::Assemble, ms_since(t));
        if !emitted.is_empty() {
            marks.push(EmissionMark { frame: frame.frame_index, clips: emitted.len(), wall_ms: ms_since(start) });
        }

        let tracks = matches
            .into_iter()
            .map(|m| OverlayTrack { track_id: m.track_id, detection: m.detection })
            .collect();
        let _ = coll_tx.send(CollectorMsg::Frame(FrameRecord { frame, tracks }));

        if !samples.is_empty() {
            let t = Instant::now();
            let prepared = prepare(&samples, lifter);
            metrics.stage(Stage::Preprocess, ms_since(t));
            match prepared {
                Ok(tensor) => {
                    let earliest_ts = samples.iter().map(|s| s.ts_span_ms.1).min().unwrap_or(0);
                    let _ = coll_tx.send(CollectorMsg::Announce { seq, earliest_ts });
                    if job_tx.send(Job { seq, samples, tensor, started: t }).is_err() {
                        break;
                    }
                    seq += 1;
                }
                Err(e) => {
                    tracing::warn!("skipping {} samples: {e}", samples.len());
                    metrics.update(|s| s.classify_errors += 1);
                }
            }
        }
        metrics.update(|s| {
            s.frames_processed += 1;
            s.clips_emitted += emitted.len() as u64;
        });
    }
    marks
}

struct Capture {
    draft: AlertDraft,
    start_ts: i64,
    end_ts: i64,
}

/// Samples, classifier output and inference time of one emission.
type Classified = (Vec<ClipSample>, Result<Vec<ClassDistribution>>, f64);

struct Collector {
    cfg: PipelineConfig,
    fps: f64,
    alert_dir: Option<PathBuf>,
    sink: Arc<dyn PipelineSink>,
    metrics: Arc<MetricsHub>,
    broadcast: Option<(Sender<BroadcastItem>, Receiver<BroadcastItem>)>,
    ring: VecDeque<FrameRecord>,
    announced: BTreeMap<u64, i64>,
    results: BTreeMap<u64, Classified>,
    next_seq: u64,
    captures: Vec<Capture>,
    labels: BTreeMap<TrackId, RiskLevel>,
    label_history: BTreeMap<TrackId, Vec<(u64, RiskLevel)>>,
    /// (frame, ts, danger mass) of recent assessments, for thumbnail choice.
    peaks: VecDeque<(u64, i64, f64)>,
    last_alert: HashMap<Vec<TrackId>, i64>,
    alerts: Vec<AlertDraft>,
}

impl Collector {
    fn new(
        cfg: &PipelineConfig,
        fps: f64,
        alert_dir: Option<PathBuf>,
        sink: Arc<dyn PipelineSink>,
        metrics: Arc<MetricsHub>,
        bc: (Sender<BroadcastItem>, Receiver<BroadcastItem>),
    ) -> Self {
        // the receiver clone lets the collector evict the oldest queued frame
        let broadcast = cfg.overlay.then_some(bc);
        Collector {
            cfg: cfg.clone(),
            fps: if fps > 0.0 { fps } else { cfg.nominal_fps },
            alert_dir,
            sink,
            metrics,
            broadcast,
            ring: VecDeque::new(),
            announced: BTreeMap::new(),
            results: BTreeMap::new(),
            next_seq: 0,
            captures: Vec::new(),
            labels: BTreeMap::new(),
            label_history: BTreeMap::new(),
            peaks: VecDeque::new(),
            last_alert: HashMap::new(),
            alerts: Vec::new(),
        }
    }

    fn frame_ms(&self) -> f64 {
        1000.0 / self.fps
    }

    fn ring_capacity(&self) -> usize {
        ((self.cfg.ring_capacity_sec * self.fps).ceil() as usize).max(1)
    }

    fn handle(&mut self, msg: CollectorMsg) {
        match msg {
            CollectorMsg::Frame(rec) => self.on_frame(rec),
            CollectorMsg::Announce { seq, earliest_ts } => {
                self.announced.insert(seq, earliest_ts);
            }
            CollectorMsg::Result { seq, samples, result, inference_ms } => {
                self.results.insert(seq, (samples, result, inference_ms));
                while let Some((samples, result, inference_ms)) = self.results.remove(&self.next_seq) {
                    self.announced.remove(&self.next_seq);
                    self.next_seq += 1;
                    self.on_result(samples, result, inference_ms);
                }
                self.finalize_due();
            }
        }
    }

    fn on_frame(&mut self, rec: FrameRecord) {
        if let Some((tx, rx)) = &self.broadcast {
            if self.sink.wants_frames() {
                let item = (
                    FrameRecord { frame: rec.frame.clone(), tracks: rec.tracks.clone() },
                    self.labels.clone(),
                );
                let mut item = Some(item);
                while let Some(it) = item.take() {
                    match tx.try_send(it) {
                        Ok(()) => {}
                        Err(TrySendError::Full(it)) => {
                            if rx.try_recv().is_ok() {
                                self.metrics.update(|s| s.overlay_frames_dropped += 1);
                            }
                            item = Some(it);
                        }
                        Err(TrySendError::Disconnected(_)) => {}
                    }
                }
            }
        }
        self.ring.push_back(rec);
        self.evict();
        self.finalize_due();
    }

    /// Hard capacity in live mode; in replay mode frames still needed by an
    /// unresolved job or open capture are kept (up to 4x capacity).
    fn evict(&mut self) {
        let cap = self.ring_capacity();
        let pre_ms = (self.cfg.alert_pre_sec * 1000.0) as i64;
        let keep_from = self
            .announced
            .values()
            .map(|ts| ts - pre_ms)
            .chain(self.captures.iter().map(|c| c.start_ts))
            .min();
        while self.ring.len() > cap {
            let front_ts = self.ring.front().map(|r| r.frame.timestamp_ms).unwrap_or(0);
            let needed = keep_from.is_some_and(|k| front_ts >= k);
            if needed && self.ring.len() <= 4 * cap {
                break;
            }
            self.ring.pop_front();
        }
        let oldest = self.ring.front().map(|r| r.frame.frame_index).unwrap_or(0);
        for hist in self.label_history.values_mut() {
            let keep = hist.iter().rposition(|(f, _)| *f <= oldest).unwrap_or(0);
            hist.drain(..keep);
        }
        let oldest_ts = self.ring.front().map(|r| r.frame.timestamp_ms).unwrap_or(0);
        while self.peaks.front().is_some_and(|p| p.1 < oldest_ts - 60_000) {
            self.peaks.pop_front();
        }
    }

    fn on_result(&mut self, samples: Vec<ClipSample>, result: Result<Vec<ClassDistribution>>, inference_ms: f64) {
        let dists = match result {
            Ok(d) if d.len() == samples.len() => d,
            Ok(d) => {
                tracing::warn!("classifier returned {} results for {} samples", d.len(), samples.len());
                self.metrics.update(|s| s.classify_errors += 1);
                return;
            }
            Err(e) => {
                tracing::warn!("classification failed, skipping {} samples: {e}", samples.len());
                self.metrics.update(|s| s.classify_errors += 1);
                return;
            }
        };
        let mut per_track: BTreeMap<TrackId, RiskLevel> = BTreeMap::new();
        let mut fresh = Vec::new();
        for (sample, dist) in samples.iter().zip(&dists) {
            let mut a = aggregate_risk(dist, &self.cfg.risk);
            a.track_ids = sample.track_ids.clone();
            a.frame_span = sample.frame_span;
            let fill = (sample.ts_span_ms.1 - sample.ts_span_ms.0) as f64;
            self.metrics.clip(ClipLatency::new(a.track_ids.clone(), a.frame_span, fill, inference_ms));
            self.metrics.update(|s| {
                s.samples_classified += 1;
                s.assessments_by_level.bump(a.level);
            });
            self.sink.on_assessment(&a);
            self.peaks.push_back((sample.emitted_at, sample.ts_span_ms.1, a.danger_mass));
            for id in &a.track_ids {
                let e = per_track.entry(*id).or_insert(a.level);
                *e = (*e).max(a.level);
            }
            if a.level != RiskLevel::Safe {
                fresh.push((a, sample.emitted_at, sample.ts_span_ms.1));
            }
        }
        for (id, level) in per_track {
            let emitted_at = samples.iter().map(|s| s.emitted_at).max().unwrap_or(0);
            self.labels.insert(id, level);
            self.label_history.entry(id).or_default().push((emitted_at, level));
        }

        let cooldown_ms = (self.cfg.alert_cooldown_sec * 1000.0) as i64;
        for (a, event_frame, event_ts) in fresh {
            let mut key = a.track_ids.clone();
            key.sort_unstable();
            if let Some(last) = self.last_alert.get(&key) {
                if event_ts - last < cooldown_ms {
                    self.metrics.update(|s| s.alerts_suppressed += 1);
                    continue;
                }
            }
            self.last_alert.insert(key, event_ts);
            let (top_class, top_prob) = a.top_class;
            let ids: Vec<String> = a.track_ids.iter().map(|i| i.to_string()).collect();
            let draft = AlertDraft {
                level: a.level,
                summary: format!(
                    "{} on track{} {}: top {} ({:.2}), danger mass {:.2}, warning mass {:.2}",
                    a.level,
                    if ids.len() > 1 { "s" } else { "" },
                    ids.join("+"),
                    top_class,
                    top_prob,
                    a.danger_mass,
                    a.warning_mass
                ),
                track_ids: a.track_ids.clone(),
                frame_span: a.frame_span,
                event_frame,
                event_ts_ms: event_ts,
                danger_mass: a.danger_mass,
                warning_mass: a.warning_mass,
                top_class,
                top_prob,
                clip_path: None,
                thumbnail_path: None,
                clip_frames: (event_frame, event_frame),
                clip_truncated: false,
                peak_frame: event_frame,
            };
            self.captures.push(Capture {
                draft,
                start_ts: event_ts - (self.cfg.alert_pre_sec * 1000.0).round() as i64,
                end_ts: event_ts + (self.cfg.alert_post_sec * 1000.0).round() as i64,
            });
        }
    }

    fn finalize_due(&mut self) {
        let newest = match self.ring.back() {
            Some(r) => r.frame.timestamp_ms,
            None => return,
        };
        let (due, open): (Vec<_>, Vec<_>) = std::mem::take(&mut self.captures).into_iter().partition(|c| newest >= c.end_ts);
        self.captures = open;
        for c in due {
            self.finalize(c);
        }
    }

    fn finish(&mut self) {
        for c in std::mem::take(&mut self.captures) {
            self.finalize(c);
        }
        self.broadcast = None;
    }

    fn label_at(&self, frame: u64) -> BTreeMap<TrackId, RiskLevel> {
        self.label_history
            .iter()
            .filter_map(|(id, h)| h.iter().rev().find(|(f, _)| *f <= frame).map(|(_, l)| (*id, *l)))
            .collect()
    }

    fn finalize(&mut self, c: Capture) {
        let mut draft = c.draft;
        let span: Vec<&FrameRecord> = self
            .ring
            .iter()
            .filter(|r| (c.start_ts..=c.end_ts).contains(&r.frame.timestamp_ms))
            .collect();
        let tol = self.frame_ms().ceil() as i64;
        let truncated = match (span.first(), span.last()) {
            (Some(a), Some(b)) => a.frame.timestamp_ms > c.start_ts + tol || b.frame.timestamp_ms < c.end_ts - tol,
            _ => true,
        };
        draft.clip_truncated = truncated;
        if let (Some(a), Some(b)) = (span.first(), span.last()) {
            draft.clip_frames = (a.frame.frame_index, b.frame.frame_index);
        }
        draft.peak_frame = self
            .peaks
            .iter()
            .filter(|p| (c.start_ts..=c.end_ts).contains(&p.1))
            .fold(None::<(u64, f64)>, |best, p| match best {
                Some((_, m)) if p.2 <= m => best,
                _ => Some((p.0, p.2)),
            })
            .map_or(draft.event_frame, |(f, _)| f);

        if let Some(dir) = &self.alert_dir {
            match self.write_artifacts(dir, &span, &draft, (c.start_ts, c.end_ts)) {
                Ok((clip, thumb)) => {
                    draft.clip_path = Some(clip);
                    draft.thumbnail_path = Some(thumb);
                }
                Err(e) => {
                    tracing::error!("alert artifacts not written, alert dropped: {e}");
                    return;
                }
            }
        }
        self.metrics.update(|s| s.alerts_by_level.bump(draft.level));
        self.sink.on_alert(&draft);
        self.alerts.push(draft);
    }

    fn write_artifacts(
        &self,
        dir: &std::path::Path,
        span: &[&FrameRecord],
        draft: &AlertDraft,
        requested: (i64, i64),
    ) -> Result<(PathBuf, PathBuf)> {
        let canvas = self.cfg.canvas();
        let mut frames = Vec::with_capacity(span.len());
        let mut size = (canvas.width, canvas.height);
        let mut thumb = None;
        for r in span {
            let img = render_overlay(&r.frame, &r.tracks, &self.label_at(r.frame.frame_index), canvas);
            size = (img.width(), img.height());
            let png = encode_png(&img)?;
            if r.frame.frame_index == draft.peak_frame {
                thumb = Some(png.clone());
            }
            frames.push(ClipFrame { frame_index: r.frame.frame_index, ts_ms: r.frame.timestamp_ms, png });
        }
        let thumb = match thumb {
            Some(t) => t,
            None => match span.iter().min_by_key(|r| r.frame.frame_index.abs_diff(draft.peak_frame)) {
                Some(r) => encode_png(&render_overlay(&r.frame, &r.tracks, &self.label_at(r.frame.frame_index), canvas))?,
                None => encode_png(&image::RgbImage::from_pixel(canvas.width, canvas.height, super::overlay::BACKGROUND))?,
            },
        };
        let ids: Vec<String> = draft.track_ids.iter().map(|i| i.to_string()).collect();
        let stem = format!(
            "{}_{:08}_t{}_{}",
            draft.level.as_str().to_ascii_lowercase(),
            draft.event_frame,
            ids.join("-"),
            &uuid::Uuid::new_v4().simple().to_string()[..8]
        );
        let clip_path = dir.join(format!("{stem}.{CLIP_EXT}"));
        let thumb_path = dir.join(format!("{stem}.png"));
        let header = ClipHeader {
            version: 1,
            width: size.0,
            height: size.1,
            fps: self.fps,
            frame_count: frames.len(),
            start_frame: frames.first().map_or(draft.event_frame, |f| f.frame_index),
            end_frame: frames.last().map_or(draft.event_frame, |f| f.frame_index),
            start_ts_ms: frames.first().map_or(requested.0, |f| f.ts_ms),
            end_ts_ms: frames.last().map_or(requested.1, |f| f.ts_ms),
            requested_ts_ms: requested,
            truncated: draft.clip_truncated,
            level: draft.level,
            track_ids: draft.track_ids.clone(),
            event_frame: draft.event_frame,
            peak_frame: draft.peak_frame,
        };
        write_clip(&clip_path, &header, &frames)?;
        std::fs::write(&thumb_path, thumb).map_err(|e| Error::io(&thumb_path, e))?;
        Ok((clip_path, thumb_path))
    }
}
