//! Semantic backend: dual-stream chunk sampling over rendered frames,
//! prompt assembly with scene profiles and one-step narrative memory,
//! chat-completions dispatch across one or two endpoints, and verdict
//! parsing.

mod client;
mod prompt;
mod session;
mod verdict;

pub use client::{infer_chunk, ChatClient};
pub use prompt::{build_prompt, PromptPayload, PREVIOUS_CLOSE, PREVIOUS_OPEN};
pub use session::{run_vlm_session, spawn_vlm_session, ChunkInfo, NullVlmSink, VlmAlert, VlmHandle, VlmReport, VlmSink};
pub use verdict::{parse_verdict, ParseMode, VlmVerdict};

use std::sync::{Arc, OnceLock};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::runtime::overlay::{render_scene, Canvas};
use crate::runtime::PoseFrame;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SceneProfile {
    Indoor,
    OutdoorIntersection,
    OutdoorPark,
    Generic,
}

impl std::str::FromStr for SceneProfile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().replace('-', "_").as_str() {
            "INDOOR" => Ok(SceneProfile::Indoor),
            "OUTDOOR_INTERSECTION" => Ok(SceneProfile::OutdoorIntersection),
            "OUTDOOR_PARK" => Ok(SceneProfile::OutdoorPark),
            "GENERIC" => Ok(SceneProfile::Generic),
            other => Err(Error::Config(format!("unknown scene profile {other:?}"))),
        }
    }
}

impl std::fmt::Display for SceneProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = serde_json::to_value(self).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
        f.write_str(&s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VlmConfig {
    pub model: String,
    pub chunk_duration_sec: f64,
    pub recent_fps: f64,
    pub history_max_sec: f64,
    pub history_fps: f64,
    pub target_max_dim: u32,
    pub min_dim: u32,
    pub max_tokens: u32,
    pub temperature: f64,
    pub top_p: f64,
    pub dual_server_mode: bool,
    pub endpoints: Vec<String>,
    pub memory_loop: bool,
    pub scene_profile: SceneProfile,
    /// Context grid covers only the time before the action window.
    pub context_disjoint: bool,
    pub request_timeout_ms: u64,
    pub paced: bool,
    pub canvas_width: u32,
    pub canvas_height: u32,
    pub jpeg_quality: u8,
}

impl Default for VlmConfig {
    fn default() -> Self {
        VlmConfig {
            model: "Sehyo/Qwen3.5-35B-A3B-NVFP4".into(),
            chunk_duration_sec: 4.0,
            recent_fps: 6.0,
            history_max_sec: 10.0,
            history_fps: 1.0,
            target_max_dim: 720,
            min_dim: 420,
            max_tokens: 10024,
            temperature: 0.4,
            top_p: 0.6,
            dual_server_mode: false,
            endpoints: vec!["http://127.0.0.1:8000".into()],
            memory_loop: true,
            scene_profile: SceneProfile::Generic,
            context_disjoint: true,
            request_timeout_ms: 60_000,
            paced: true,
            canvas_width: 1280,
            canvas_height: 720,
            jpeg_quality: 85,
        }
    }
}

impl VlmConfig {
    pub fn action_frame_count(&self) -> usize {
        (self.chunk_duration_sec * self.recent_fps).round() as usize
    }

    pub fn context_frame_cap(&self) -> usize {
        (self.history_max_sec * self.history_fps).floor() as usize
    }

    pub fn chunk_ms(&self) -> f64 {
        self.chunk_duration_sec * 1000.0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let n = self.chunk_duration_sec * self.recent_fps;
        if !(n >= 1.0) || (n - n.round()).abs() > 1e-9 {
            return bad(format!("chunk_duration_sec x recent_fps = {n} is not a whole frame count"));
        }
        if !(self.history_fps > 0.0) || !(self.history_max_sec >= 0.0) {
            return bad("history window must be non-negative with a positive rate".into());
        }
        if self.target_max_dim == 0 || self.min_dim == 0 || self.min_dim > self.target_max_dim {
            return bad("need 0 < min_dim <= target_max_dim".into());
        }
        let want = if self.dual_server_mode { 2 } else { 1 };
        if self.endpoints.len() != want {
            return bad(format!(
                "dual_server_mode={} needs {want} endpoint(s), got {}",
                self.dual_server_mode,
                self.endpoints.len()
            ));
        }
        if self.canvas_width == 0 || self.canvas_height == 0 {
            return bad("canvas size must be positive".into());
        }
        Ok(())
    }

    /// Endpoint index for a chunk: alternating in dual mode.
    pub fn endpoint_for(&self, chunk_index: u64) -> usize {
        if self.dual_server_mode {
            (chunk_index % 2) as usize
        } else {
            0
        }
    }
}

fn round_half_up(v: f64) -> u32 {
    (v + 0.5).floor().max(1.0) as u32
}

/// Scales so the long side is `target_max_dim`; if that pushes the short
/// side under `min_dim`, scales so the short side is `min_dim` instead.
/// Images whose long side is already within `target_max_dim` are untouched.
pub fn resize_policy(w: u32, h: u32, cfg: &VlmConfig) -> (u32, u32) {
    let (long, short) = (w.max(h) as f64, w.min(h) as f64);
    if w == 0 || h == 0 || long <= cfg.target_max_dim as f64 {
        return (w, h);
    }
    let mut s = cfg.target_max_dim as f64 / long;
    if short * s < cfg.min_dim as f64 {
        s = (cfg.min_dim as f64 / short).min(1.0);
    }
    (round_half_up(w as f64 * s), round_half_up(h as f64 * s))
}

/// A frame in the sampling history; pose frames are drawn on first use.
#[derive(Debug, Clone)]
pub struct HistoryFrame {
    pub frame_index: u64,
    pub ts_ms: i64,
    pose: Option<Arc<PoseFrame>>,
    canvas: Canvas,
    image: Arc<OnceLock<Arc<RgbImage>>>,
}

impl HistoryFrame {
    pub fn rendered(frame_index: u64, ts_ms: i64, image: Arc<RgbImage>) -> Self {
        let cell = OnceLock::new();
        let _ = cell.set(image);
        HistoryFrame { frame_index, ts_ms, pose: None, canvas: Canvas::default(), image: Arc::new(cell) }
    }

    pub fn from_pose(frame: Arc<PoseFrame>, canvas: Canvas) -> Self {
        HistoryFrame {
            frame_index: frame.frame_index,
            ts_ms: frame.timestamp_ms,
            pose: Some(frame),
            canvas,
            image: Arc::new(OnceLock::new()),
        }
    }

    pub fn image(&self) -> Arc<RgbImage> {
        self.image
            .get_or_init(|| {
                let frame = self.pose.as_ref().expect("unrendered history frame keeps its pose");
                Arc::new(render_scene(frame, self.canvas))
            })
            .clone()
    }
}

#[derive(Debug, Clone)]
pub struct ChunkFrame {
    pub frame_index: u64,
    pub ts_ms: i64,
    pub image: Arc<RgbImage>,
}

#[derive(Debug, Clone)]
pub struct ChunkSample {
    pub chunk_index: u64,
    pub action_frames: Vec<ChunkFrame>,
    pub context_frames: Vec<ChunkFrame>,
    /// First and last timestamp of the action window.
    pub time_span: (i64, i64),
}

/// Median spacing of consecutive timestamps, in ms.
pub fn frame_period_ms(history: &[HistoryFrame]) -> f64 {
    let mut d: Vec<i64> = history.windows(2).map(|w| w[1].ts_ms - w[0].ts_ms).filter(|d| *d > 0).collect();
    if d.is_empty() {
        return 0.0;
    }
    d.sort_unstable();
    d[d.len() / 2] as f64
}

fn nearest(history: &[HistoryFrame], t: f64) -> &HistoryFrame {
    let i = history.partition_point(|f| (f.ts_ms as f64) < t);
    match (i.checked_sub(1).map(|j| &history[j]), history.get(i)) {
        (Some(a), Some(b)) => {
            if (t - a.ts_ms as f64).abs() <= (b.ts_ms as f64 - t).abs() {
                a
            } else {
                b
            }
        }
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => unreachable!("history is non-empty"),
    }
}

/// Grid instants for the action stream: `now - D + (k+1) D / N`, k < N.
pub fn action_grid(now_ms: i64, cfg: &VlmConfig) -> Vec<f64> {
    let n = cfg.action_frame_count();
    let d = cfg.chunk_ms();
    (0..n).map(|k| now_ms as f64 - d + (k + 1) as f64 * d / n as f64).collect()
}

/// Grid instants for the context stream, oldest first.
pub fn context_grid(now_ms: i64, cfg: &VlmConfig) -> Vec<f64> {
    let step = 1000.0 / cfg.history_fps;
    let mut g: Vec<f64> = if cfg.context_disjoint {
        let n = ((cfg.history_max_sec - cfg.chunk_duration_sec).max(0.0) * cfg.history_fps + 1e-9).floor() as usize;
        (1..=n).map(|k| now_ms as f64 - cfg.chunk_ms() - k as f64 * step).collect()
    } else {
        (0..cfg.context_frame_cap()).map(|k| now_ms as f64 - k as f64 * step).collect()
    };
    g.reverse();
    g
}

/// Samples one chunk ending at `now_ms`. `history` must be sorted by time.
/// Returns `None` (deferred) unless the history covers a full chunk.
pub fn sample_chunk(history: &[HistoryFrame], now_ms: i64, chunk_index: u64, cfg: &VlmConfig) -> Option<ChunkSample> {
    let first = history.first()?;
    let period = frame_period_ms(history);
    let covered = (now_ms - first.ts_ms) as f64 + period;
    if covered + 1e-6 < cfg.chunk_ms() {
        return None;
    }
    let resize = |f: &HistoryFrame| {
        let src = f.image();
        let (w, h) = resize_policy(src.width(), src.height(), cfg);
        let image = if (w, h) == (src.width(), src.height()) {
            src
        } else {
            Arc::new(image::imageops::resize(&*src, w, h, image::imageops::FilterType::Triangle))
        };
        ChunkFrame { frame_index: f.frame_index, ts_ms: f.ts_ms, image }
    };
    let action: Vec<ChunkFrame> = action_grid(now_ms, cfg).into_iter().map(|t| resize(nearest(history, t))).collect();
    let oldest_ok = first.ts_ms as f64 - period / 2.0;
    let context: Vec<ChunkFrame> = context_grid(now_ms, cfg)
        .into_iter()
        .filter(|t| *t >= oldest_ok)
        .map(|t| resize(nearest(history, t)))
        .collect();
    Some(ChunkSample {
        chunk_index,
        time_span: (action.first().map_or(now_ms, |f| f.ts_ms), action.last().map_or(now_ms, |f| f.ts_ms)),
        action_frames: action,
        context_frames: context,
    })
}
