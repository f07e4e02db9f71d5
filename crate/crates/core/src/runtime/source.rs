//! Frame sources. Pose replay (JSON Lines) and synthetic scenarios are
//! always available; camera/RTSP capture is not compiled into this build.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::scenario::{self, Scenario};
use crate::error::{Error, Result};
use crate::geometry::{CocoPose17, Keypoint};
use crate::tracking::{BBox, Detection};

/// One timestamped frame of multi-person detections.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseFrame {
    pub frame_index: u64,
    pub timestamp_ms: i64,
    pub detections: Vec<Detection>,
    pub image: Option<Arc<RgbImage>>,
}

/// Wire form of one replay line:
/// `{"frame": int, "ts_ms": int, "detections": [{"box": [cx, cy, w, h], "score": f, "kpts": [[x, y, conf] x 17]}]}`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayRecord {
    pub frame: u64,
    pub ts_ms: i64,
    pub detections: Vec<ReplayDetection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayDetection {
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    pub score: f64,
    pub kpts: Vec<[f64; 3]>,
}

impl ReplayRecord {
    pub fn from_frame(f: &PoseFrame) -> Self {
        ReplayRecord {
            frame: f.frame_index,
            ts_ms: f.timestamp_ms,
            detections: f
                .detections
                .iter()
                .map(|d| ReplayDetection {
                    bbox: [d.bbox.cx, d.bbox.cy, d.bbox.w, d.bbox.h],
                    score: d.score,
                    kpts: d.pose.joints.iter().map(|j| [j.x, j.y, j.conf]).collect(),
                })
                .collect(),
        }
    }

    pub fn into_frame(self) -> std::result::Result<PoseFrame, String> {
        let detections = self
            .detections
            .into_iter()
            .enumerate()
            .map(|(i, d)| {
                if d.kpts.len() != 17 {
                    return Err(format!("detection {i} has {} keypoints, expected 17", d.kpts.len()));
                }
                let [cx, cy, w, h] = d.bbox;
                if !(w > 0.0 && h > 0.0) {
                    return Err(format!("detection {i} has a non-positive box extent"));
                }
                if !(0.0..=1.0).contains(&d.score) {
                    return Err(format!("detection {i} score {} outside [0, 1]", d.score));
                }
                let pose = CocoPose17::new(std::array::from_fn(|k| {
                    let [x, y, c] = d.kpts[k];
                    Keypoint::new_2d(x, y, c)
                }));
                Ok(Detection { bbox: BBox::new(cx, cy, w, h), score: d.score, pose })
            })
            .collect::<std::result::Result<Vec<_>, String>>()?;
        Ok(PoseFrame { frame_index: self.frame, timestamp_ms: self.ts_ms, detections, image: None })
    }
}

/// Parses a whole replay document, validating every line and frame order.
pub fn parse_replay(text: &str) -> Result<Vec<PoseFrame>> {
    let mut frames: Vec<PoseFrame> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ReplayRecord = serde_json::from_str(line)
            .map_err(|e| Error::MalformedReplay { line: line_no, message: e.to_string() })?;
        let frame =
            rec.into_frame().map_err(|message| Error::MalformedReplay { line: line_no, message })?;
        if let Some(prev) = frames.last() {
            if frame.frame_index <= prev.frame_index {
                return Err(Error::MalformedReplay {
                    line: line_no,
                    message: format!(
                        "frame index {} not greater than previous {}",
                        frame.frame_index, prev.frame_index
                    ),
                });
            }
        }
        frames.push(frame);
    }
    Ok(frames)
}

pub fn write_replay(path: &Path, frames: &[PoseFrame]) -> Result<()> {
    let mut f = std::io::BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    for frame in frames {
        serde_json::to_writer(&mut f, &ReplayRecord::from_frame(frame))?;
        f.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    f.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SourceKind {
    PoseReplay,
    SyntheticScenario,
    CameraRtsp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceDescriptor {
    Replay { path: PathBuf },
    Scenario { name: String, seed: u64 },
    Camera { address: String },
}

impl SourceDescriptor {
    /// `scenario:<name>[:seed]`, `rtsp://…` / `camera:<n>`, or a file path.
    pub fn parse(s: &str) -> Self {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("scenario:") {
            let mut parts = rest.splitn(2, ':');
            let name = parts.next().unwrap_or_default().to_string();
            let seed = parts.next().and_then(|v| v.parse().ok()).unwrap_or(scenario::DEFAULT_SEED);
            SourceDescriptor::Scenario { name, seed }
        } else if s.starts_with("rtsp://") || s.starts_with("rtsps://") || s.starts_with("camera:") {
            SourceDescriptor::Camera { address: s.to_string() }
        } else {
            SourceDescriptor::Replay { path: PathBuf::from(s) }
        }
    }

    pub fn kind(&self) -> SourceKind {
        match self {
            SourceDescriptor::Replay { .. } => SourceKind::PoseReplay,
            SourceDescriptor::Scenario { .. } => SourceKind::SyntheticScenario,
            SourceDescriptor::Camera { .. } => SourceKind::CameraRtsp,
        }
    }

    pub fn is_live(&self) -> bool {
        self.kind() == SourceKind::CameraRtsp
    }
}

impl std::fmt::Display for SourceDescriptor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SourceDescriptor::Replay { path } => write!(f, "{}", path.display()),
            SourceDescriptor::Scenario { name, seed } => write!(f, "scenario:{name}:{seed}"),
            SourceDescriptor::Camera { address } => f.write_str(address),
        }
    }
}

/// An opened, finite-or-live sequence of pose frames.
pub struct FrameSource {
    pub kind: SourceKind,
    pub descriptor: SourceDescriptor,
    pub nominal_fps: f64,
    frames: Box<dyn Iterator<Item = Result<PoseFrame>> + Send>,
}

impl std::fmt::Debug for FrameSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FrameSource")
            .field("kind", &self.kind)
            .field("descriptor", &self.descriptor)
            .field("nominal_fps", &self.nominal_fps)
            .finish()
    }
}

impl FrameSource {
    pub fn from_frames(descriptor: SourceDescriptor, nominal_fps: f64, frames: Vec<PoseFrame>) -> Self {
        FrameSource {
            kind: descriptor.kind(),
            descriptor,
            nominal_fps,
            frames: Box::new(frames.into_iter().map(Ok)),
        }
    }

    pub fn is_live(&self) -> bool {
        self.kind == SourceKind::CameraRtsp
    }
}

impl Iterator for FrameSource {
    type Item = Result<PoseFrame>;
    fn next(&mut self) -> Option<Self::Item> {
        self.frames.next()
    }
}

/// Opens a source. Replay files are streamed line by line; malformed lines
/// surface as errors from the iterator.
pub fn open_source(desc: &SourceDescriptor, nominal_fps: f64) -> Result<FrameSource> {
    match desc {
        SourceDescriptor::Replay { path } => {
            let file = File::open(path).map_err(|e| Error::BadSource(format!("{}: {e}", path.display())))?;
            let reader = BufReader::new(file);
            let mut last: Option<u64> = None;
            let frames = reader.lines().enumerate().filter_map(move |(i, line)| {
                let line_no = i + 1;
                let line = match line {
                    Ok(l) => l,
                    Err(e) => return Some(Err(Error::MalformedReplay { line: line_no, message: e.to_string() })),
                };
                if line.trim().is_empty() {
                    return None;
                }
                let parsed = serde_json::from_str::<ReplayRecord>(&line)
                    .map_err(|e| e.to_string())
                    .and_then(ReplayRecord::into_frame)
                    .and_then(|f| {
                        if last.is_some_and(|l| f.frame_index <= l) {
                            Err(format!("frame index {} is not increasing", f.frame_index))
                        } else {
                            last = Some(f.frame_index);
                            Ok(f)
                        }
                    });
                Some(parsed.map_err(|message| Error::MalformedReplay { line: line_no, message }))
            });
            Ok(FrameSource {
                kind: SourceKind::PoseReplay,
                descriptor: desc.clone(),
                nominal_fps,
                frames: Box::new(frames),
            })
        }
        SourceDescriptor::Scenario { name, seed } => {
            let scenario: Scenario = name.parse()?;
            let frames = scenario::generate(scenario, *seed);
            Ok(FrameSource::from_frames(desc.clone(), scenario::FPS, frames))
        }
        SourceDescriptor::Camera { address } => Err(Error::UnsupportedSource(format!(
            "camera capture is not built into this binary ({address})"
        ))),
    }
}
