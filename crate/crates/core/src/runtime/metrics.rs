//! Session metrics: counters, per-stage latency summaries, and the
//! per-clip latency decomposition `end_to_end = buffer_fill + inference`.

use std::collections::{BTreeMap, VecDeque};
use std::sync::Arc;
use std::time::Instant;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::risk::RiskLevel;
use crate::tracking::TrackId;

pub const STAGES: [Stage; 4] = [Stage::Track, Stage::Assemble, Stage::Preprocess, Stage::Classify];
const SAMPLE_WINDOW: usize = 4096;
const CLIP_HISTORY: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Track,
    Assemble,
    Preprocess,
    Classify,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Track => "track",
            Stage::Assemble => "assemble",
            Stage::Preprocess => "preprocess",
            Stage::Classify => "classify",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageLatency {
    pub count: u64,
    pub mean_ms: f64,
    pub p95_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipLatency {
    pub track_ids: Vec<TrackId>,
    pub frame_span: (u64, u64),
    /// Stream time covered by the window (last minus first timestamp).
    pub buffer_fill_ms: f64,
    /// Wall time from batch preparation start to classifier output.
    pub inference_ms: f64,
    pub end_to_end_ms: f64,
}

impl ClipLatency {
    pub fn new(track_ids: Vec<TrackId>, frame_span: (u64, u64), buffer_fill_ms: f64, inference_ms: f64) -> Self {
        ClipLatency { track_ids, frame_span, buffer_fill_ms, inference_ms, end_to_end_ms: buffer_fill_ms + inference_ms }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueDepths {
    pub analysis: usize,
    pub classify: usize,
    pub broadcast: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelCounts {
    #[serde(rename = "SAFE")]
    pub safe: u64,
    #[serde(rename = "WARNING")]
    pub warning: u64,
    #[serde(rename = "DANGER")]
    pub danger: u64,
}

impl LevelCounts {
    pub fn bump(&mut self, level: RiskLevel) {
        match level {
            RiskLevel::Safe => self.safe += 1,
            RiskLevel::Warning => self.warning += 1,
            RiskLevel::Danger => self.danger += 1,
        }
    }

    pub fn get(&self, level: RiskLevel) -> u64 {
        match level {
            RiskLevel::Safe => self.safe,
            RiskLevel::Warning => self.warning,
            RiskLevel::Danger => self.danger,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    /// Frames fully processed per wall-clock second since the first frame.
    pub efps: f64,
    pub elapsed_s: f64,
    pub stages: BTreeMap<Stage, StageLatency>,
    /// Means over all reported clips.
    pub buffer_fill_ms: f64,
    pub inference_ms: f64,
    pub end_to_end_latency_ms: f64,
    pub clip_latencies: Vec<ClipLatency>,
    pub queue_depths: QueueDepths,
    pub frames_in: u64,
    pub frames_processed: u64,
    pub frames_dropped: u64,
    pub overlay_frames_dropped: u64,
    pub clips_emitted: u64,
    pub samples_classified: u64,
    pub classify_errors: u64,
    pub assessments_by_level: LevelCounts,
    pub alerts_by_level: LevelCounts,
    pub alerts_suppressed: u64,
}

#[derive(Default)]
struct Inner {
    started: Option<Instant>,
    finished: Option<Instant>,
    stage_samples: BTreeMap<Stage, (u64, VecDeque<f64>)>,
    clips: VecDeque<ClipLatency>,
    clip_count: u64,
    fill_sum: f64,
    inference_sum: f64,
    snap: MetricsSnapshot,
}

type DepthProbe = Box<dyn Fn() -> QueueDepths + Send + Sync>;

/// Shared accumulator; writers take a short lock, readers get copies.
#[derive(Default)]
pub struct MetricsHub {
    inner: Mutex<Inner>,
    depths: Mutex<Option<DepthProbe>>,
}

impl std::fmt::Debug for MetricsHub {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MetricsHub").finish_non_exhaustive()
    }
}

impl MetricsHub {
    pub fn new() -> Arc<Self> {
        Arc::new(MetricsHub::default())
    }

    pub fn set_depth_probe(&self, probe: impl Fn() -> QueueDepths + Send + Sync + 'static) {
        *self.depths.lock() = Some(Box::new(probe));
    }

    pub fn clear_depth_probe(&self) {
        *self.depths.lock() = None;
    }

    pub fn update(&self, f: impl FnOnce(&mut MetricsSnapshot)) {
        f(&mut self.inner.lock().snap);
    }

    pub fn frame_in(&self) {
        let mut g = self.inner.lock();
        g.started.get_or_insert_with(Instant::now);
        g.snap.frames_in += 1;
    }

    pub fn stage(&self, stage: Stage, ms: f64) {
        let mut g = self.inner.lock();
        let e = g.stage_samples.entry(stage).or_default();
        e.0 += 1;
        e.1.push_back(ms);
        if e.1.len() > SAMPLE_WINDOW {
            e.1.pop_front();
        }
    }

    pub fn clip(&self, c: ClipLatency) {
        let mut g = self.inner.lock();
        g.clip_count += 1;
        g.fill_sum += c.buffer_fill_ms;
        g.inference_sum += c.inference_ms;
        g.clips.push_back(c);
        if g.clips.len() > CLIP_HISTORY {
            g.clips.pop_front();
        }
    }

    pub fn finish(&self) {
        let mut g = self.inner.lock();
        if g.finished.is_none() {
            g.finished = Some(Instant::now());
        }
    }

    pub fn snapshot(&self) -> MetricsSnapshot {
        let depths = self.depths.lock().as_ref().map(|p| p()).unwrap_or_default();
        let g = self.inner.lock();
        let mut s = g.snap.clone();
        s.queue_depths = depths;
        if let Some(start) = g.started {
            let end = g.finished.unwrap_or_else(Instant::now);
            s.elapsed_s = end.duration_since(start).as_secs_f64();
            if s.elapsed_s > 0.0 {
                s.efps = s.frames_processed as f64 / s.elapsed_s;
            }
        }
        for stage in STAGES {
            let lat = g.stage_samples.get(&stage).map_or_else(StageLatency::default, |(n, v)| summarize(*n, v));
            s.stages.insert(stage, lat);
        }
        if g.clip_count > 0 {
            s.buffer_fill_ms = g.fill_sum / g.clip_count as f64;
            s.inference_ms = g.inference_sum / g.clip_count as f64;
            s.end_to_end_latency_ms = s.buffer_fill_ms + s.inference_ms;
        }
        s.clip_latencies = g.clips.iter().cloned().collect();
        s
    }
}

fn summarize(count: u64, v: &VecDeque<f64>) -> StageLatency {
    if v.is_empty() {
        return StageLatency::default();
    }
    let mut sorted: Vec<f64> = v.iter().copied().collect();
    sorted.sort_by(f64::total_cmp);
    // nearest-rank percentile
    let rank = ((0.95 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    StageLatency {
        count,
        mean_ms: sorted.iter().sum::<f64>() / sorted.len() as f64,
        p95_ms: sorted[rank - 1],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_hub_is_zeroed() {
        let s = MetricsHub::new().snapshot();
        assert_eq!(s.frames_in, 0);
        assert_eq!(s.efps, 0.0);
        assert_eq!(s.stages.len(), 4);
        assert!(s.stages.values().all(|l| *l == StageLatency::default()));
    }

    #[test]
    fn percentile_is_nearest_rank() {
        let v: VecDeque<f64> = (1..=100).map(f64::from).collect();
        let l = summarize(100, &v);
        assert_eq!(l.p95_ms, 95.0);
        assert_eq!(l.mean_ms, 50.5);
        let one: VecDeque<f64> = [7.0].into();
        assert_eq!(summarize(1, &one).p95_ms, 7.0);
    }

    #[test]
    fn clip_identity_holds() {
        let hub = MetricsHub::new();
        hub.clip(ClipLatency::new(vec![1], (0, 99), 3300.0, 12.5));
        hub.clip(ClipLatency::new(vec![1, 2], (30, 129), 3300.0, 7.5));
        let s = hub.snapshot();
        for c in &s.clip_latencies {
            assert_eq!(c.end_to_end_ms, c.buffer_fill_ms + c.inference_ms);
        }
        assert_eq!(s.end_to_end_latency_ms, s.buffer_fill_ms + s.inference_ms);
        assert_eq!(s.inference_ms, 10.0);
    }

    #[test]
    fn snapshot_serializes_level_keys() {
        let mut c = LevelCounts::default();
        c.bump(RiskLevel::Danger);
        let v = serde_json::to_value(&c).unwrap();
        assert_eq!(v["DANGER"], 1);
    }
}
