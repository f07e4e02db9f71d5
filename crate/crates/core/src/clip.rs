//! Per-track skeleton buffering, stride-gated clip emission, person-loss
//! pruning, and proximity pairing into one- or two-person samples.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::geometry::layout::coco;
use crate::geometry::CocoPose17;
use crate::tracking::{Detection, TrackId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssemblyConfig {
    pub clip_len: usize,
    pub clip_stride: usize,
    /// Buffers missing for more than this many consecutive frames are dropped.
    pub loss_horizon: u64,
    /// Pair gating distance in pixels; 0 disables gating.
    pub pair_distance: f64,
    pub max_persons: usize,
    pub centroid_conf: f64,
}

impl Default for AssemblyConfig {
    fn default() -> Self {
        AssemblyConfig {
            clip_len: 100,
            clip_stride: 30,
            loss_horizon: 60,
            pair_distance: 0.0,
            max_persons: 100,
            centroid_conf: 0.3,
        }
    }
}

impl AssemblyConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.clip_len > self.clip_stride && self.clip_stride > 0 && self.max_persons >= 1 {
            Ok(())
        } else {
            Err(crate::Error::Config(format!(
                "need clip_len > clip_stride > 0 and max_persons >= 1, got {self:?}"
            )))
        }
    }
}

/// Keeps at most `max_persons` detections, dropping the lowest scores first.
/// Survivors keep their input order.
pub fn cap_persons(dets: Vec<Detection>, max_persons: usize) -> Vec<Detection> {
    if dets.len() <= max_persons {
        return dets;
    }
    let mut idx: Vec<usize> = (0..dets.len()).collect();
    idx.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    idx.truncate(max_persons);
    idx.sort_unstable();
    let mut dets: Vec<Option<Detection>> = dets.into_iter().map(Some).collect();
    idx.into_iter().map(|i| dets[i].take().unwrap()).collect()
}

/// Mean of the shoulder/hip joints whose confidence reaches `conf_floor`.
pub fn centroid(pose: &CocoPose17, conf_floor: f64) -> Option<(f64, f64)> {
    let pts: Vec<_> = coco::TORSO
        .iter()
        .map(|&i| pose.joints[i])
        .filter(|j| !j.is_missing() && j.conf >= conf_floor)
        .collect();
    if pts.is_empty() {
        return None;
    }
    let n = pts.len() as f64;
    Some((pts.iter().map(|p| p.x).sum::<f64>() / n, pts.iter().map(|p| p.y).sum::<f64>() / n))
}

#[derive(Debug, Clone)]
pub struct SkeletonBuffer {
    pub track_id: TrackId,
    frames: VecDeque<(u64, CocoPose17, i64)>,
    appended_since_emit: usize,
    emitted_once: bool,
    missing_streak: u64,
}

impl SkeletonBuffer {
    fn new(track_id: TrackId, capacity: usize) -> Self {
        SkeletonBuffer {
            track_id,
            frames: VecDeque::with_capacity(capacity),
            appended_since_emit: 0,
            emitted_once: false,
            missing_streak: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn missing_streak(&self) -> u64 {
        self.missing_streak
    }
}

/// A buffer's window at emission time.
#[derive(Debug, Clone, PartialEq)]
pub struct EmittedClip {
    pub track_id: TrackId,
    pub frames: Vec<(u64, CocoPose17)>,
    /// Stream timestamps (ms) of the first and last frame in the window.
    pub ts_span_ms: (i64, i64),
    pub emitted_at: u64,
}

impl EmittedClip {
    pub fn poses(&self) -> Vec<CocoPose17> {
        self.frames.iter().map(|(_, p)| *p).collect()
    }
}

/// All live buffers for one stream.
#[derive(Debug, Default)]
pub struct ClipAssembler {
    cfg: AssemblyConfig,
    buffers: BTreeMap<TrackId, SkeletonBuffer>,
}

impl ClipAssembler {
    pub fn new(cfg: AssemblyConfig) -> Self {
        ClipAssembler { cfg, buffers: BTreeMap::new() }
    }

    pub fn config(&self) -> &AssemblyConfig {
        &self.cfg
    }

    pub fn buffer(&self, id: TrackId) -> Option<&SkeletonBuffer> {
        self.buffers.get(&id)
    }

    pub fn buffer_ids(&self) -> Vec<TrackId> {
        self.buffers.keys().copied().collect()
    }

    /// Appends this frame's matched poses; returns the clips that became due,
    /// ordered by track id.
    pub fn ingest_frame(
        &mut self,
        matches: &[(TrackId, CocoPose17)],
        frame: u64,
        ts_ms: i64,
    ) -> Vec<EmittedClip> {
        let cap = self.cfg.clip_len;
        let mut seen = std::collections::BTreeSet::new();
        for (id, pose) in matches {
            if !seen.insert(*id) {
                continue;
            }
            if !self.buffers.contains_key(id) && self.buffers.len() >= self.cfg.max_persons {
                continue;
            }
            let buf = self.buffers.entry(*id).or_insert_with(|| SkeletonBuffer::new(*id, cap));
            if buf.frames.back().is_some_and(|(f, _, _)| *f >= frame) {
                continue;
            }
            buf.frames.push_back((frame, *pose, ts_ms));
            while buf.frames.len() > cap {
                buf.frames.pop_front();
            }
            buf.appended_since_emit += 1;
            buf.missing_streak = 0;
        }

        let mut out = Vec::new();
        for (id, buf) in self.buffers.iter_mut() {
            if !seen.contains(id) {
                buf.missing_streak += 1;
                continue;
            }
            let due = buf.frames.len() == cap
                && (!buf.emitted_once || buf.appended_since_emit >= self.cfg.clip_stride);
            if due {
                buf.emitted_once = true;
                buf.appended_since_emit = 0;
                out.push(EmittedClip {
                    track_id: *id,
                    frames: buf.frames.iter().map(|(f, p, _)| (*f, *p)).collect(),
                    ts_span_ms: (buf.frames.front().unwrap().2, buf.frames.back().unwrap().2),
                    emitted_at: frame,
                });
            }
        }
        out
    }

    /// Drops buffers whose missing streak exceeds the loss horizon.
    pub fn prune_lost(&mut self) -> Vec<TrackId> {
        let horizon = self.cfg.loss_horizon;
        let removed: Vec<TrackId> = self
            .buffers
            .iter()
            .filter(|(_, b)| b.missing_streak > horizon)
            .map(|(id, _)| *id)
            .collect();
        for id in &removed {
            self.buffers.remove(id);
        }
        removed
    }

    /// Drops a buffer immediately (e.g. when the tracker retires the id).
    pub fn remove(&mut self, id: TrackId) -> bool {
        self.buffers.remove(&id).is_some()
    }
}

/// One- or two-person sample. Slot 1 is all-zero for single-person samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipSample {
    pub persons: [Vec<CocoPose17>; 2],
    pub track_ids: Vec<TrackId>,
    pub frame_span: (u64, u64),
    pub ts_span_ms: (i64, i64),
    pub emitted_at: u64,
}

impl ClipSample {
    pub fn is_pair(&self) -> bool {
        self.track_ids.len() == 2
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

/// Median centroid distance across aligned window positions where both
/// persons have a centroid.
pub fn median_centroid_distance(a: &EmittedClip, b: &EmittedClip, conf_floor: f64) -> Option<f64> {
    let d = a
        .frames
        .iter()
        .zip(&b.frames)
        .filter_map(|((_, pa), (_, pb))| {
            let ca = centroid(pa, conf_floor)?;
            let cb = centroid(pb, conf_floor)?;
            Some(((ca.0 - cb.0).powi(2) + (ca.1 - cb.1).powi(2)).sqrt())
        })
        .collect();
    median(d)
}

/// Builds samples for clips emitted on the same tick: every admissible
/// pair (in track-id order), followed by one zero-padded single per clip.
pub fn make_samples(emitted: &[EmittedClip], cfg: &AssemblyConfig) -> Vec<ClipSample> {
    let mut clips: Vec<&EmittedClip> = emitted.iter().collect();
    clips.sort_by_key(|c| c.track_id);
    let zero = || vec![CocoPose17::zeroed(); cfg.clip_len];
    let span = |cs: &[&EmittedClip]| {
        let start = cs.iter().filter_map(|c| c.frames.first().map(|f| f.0)).min().unwrap_or(0);
        let end = cs.iter().filter_map(|c| c.frames.last().map(|f| f.0)).max().unwrap_or(0);
        let ts0 = cs.iter().map(|c| c.ts_span_ms.0).min().unwrap_or(0);
        let ts1 = cs.iter().map(|c| c.ts_span_ms.1).max().unwrap_or(0);
        ((start, end), (ts0, ts1))
    };

    let mut out = Vec::new();
    for i in 0..clips.len() {
        for j in i + 1..clips.len() {
            let (a, b) = (clips[i], clips[j]);
            if cfg.pair_distance > 0.0 {
                match median_centroid_distance(a, b, cfg.centroid_conf) {
                    Some(d) if d <= cfg.pair_distance => {}
                    _ => continue,
                }
            }
            let (frame_span, ts_span_ms) = span(&[a, b]);
            out.push(ClipSample {
                persons: [a.poses(), b.poses()],
                track_ids: vec![a.track_id, b.track_id],
                frame_span,
                ts_span_ms,
                emitted_at: a.emitted_at.max(b.emitted_at),
            });
        }
    }
    for c in &clips {
        let (frame_span, ts_span_ms) = span(&[c]);
        out.push(ClipSample {
            persons: [c.poses(), zero()],
            track_ids: vec![c.track_id],
            frame_span,
            ts_span_ms,
            emitted_at: c.emitted_at,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Keypoint;

    fn pose_at(x: f64, y: f64) -> CocoPose17 {
        let mut p = CocoPose17::zeroed();
        for (k, &i) in coco::TORSO.iter().enumerate() {
            let dx = if k % 2 == 0 { -10.0 } else { 10.0 };
            let dy = if k < 2 { -30.0 } else { 30.0 };
            p.joints[i] = Keypoint::new_2d(x + dx, y + dy, 0.9);
        }
        p
    }

    fn run(frames: u64) -> Vec<u64> {
        let mut asm = ClipAssembler::new(AssemblyConfig::default());
        let mut at = Vec::new();
        for f in 1..=frames {
            for c in asm.ingest_frame(&[(1, pose_at(0.0, 0.0))], f, f as i64 * 33) {
                at.push(c.emitted_at);
            }
        }
        at
    }

    #[test]
    fn centroid_examples() {
        let mut p = CocoPose17::zeroed();
        p.joints[5] = Keypoint::new_2d(0.0, 0.0, 1.0);
        p.joints[6] = Keypoint::new_2d(2.0, 0.0, 1.0);
        p.joints[11] = Keypoint::new_2d(0.0, 2.0, 1.0);
        p.joints[12] = Keypoint::new_2d(2.0, 2.0, 1.0);
        assert_eq!(centroid(&p, 0.3), Some((1.0, 1.0)));

        let mut q = CocoPose17::zeroed();
        q.joints[5] = Keypoint::new_2d(4.0, 6.0, 0.5);
        q.joints[6] = Keypoint::new_2d(9.0, 9.0, 0.29);
        assert_eq!(centroid(&q, 0.3), Some((4.0, 6.0)));

        let mut r = p;
        for i in coco::TORSO {
            r.joints[i].conf = 0.2;
        }
        assert_eq!(centroid(&r, 0.3), None);
    }

    #[test]
    fn emission_cadence() {
        assert_eq!(run(99), Vec::<u64>::new());
        assert_eq!(run(100), vec![100]);
        assert_eq!(run(130), vec![100, 130]);
        assert_eq!(run(159), vec![100, 130]);
    }

    #[test]
    fn prune_boundary() {
        let mut asm = ClipAssembler::new(AssemblyConfig::default());
        asm.ingest_frame(&[(7, pose_at(0.0, 0.0))], 0, 0);
        for f in 1..=60 {
            asm.ingest_frame(&[], f, 0);
        }
        assert_eq!(asm.buffer(7).unwrap().missing_streak(), 60);
        assert!(asm.prune_lost().is_empty());
        asm.ingest_frame(&[], 61, 0);
        assert_eq!(asm.prune_lost(), vec![7]);
        asm.ingest_frame(&[(8, pose_at(0.0, 0.0))], 62, 0);
        assert_eq!(asm.buffer(8).unwrap().len(), 1);
    }

    #[test]
    fn gaps_do_not_insert_frames() {
        let mut asm = ClipAssembler::new(AssemblyConfig::default());
        for f in 0..50 {
            asm.ingest_frame(&[(1, pose_at(0.0, 0.0))], f, 0);
        }
        for f in 50..70 {
            asm.ingest_frame(&[], f, 0);
        }
        asm.ingest_frame(&[(1, pose_at(0.0, 0.0))], 70, 0);
        assert_eq!(asm.buffer(1).unwrap().len(), 51);
    }

    fn emitted(id: TrackId, x: f64) -> EmittedClip {
        EmittedClip {
            track_id: id,
            frames: (0..100).map(|f| (f, pose_at(x, 100.0))).collect(),
            ts_span_ms: (0, 3300),
            emitted_at: 99,
        }
    }

    #[test]
    fn pairing_combinatorics() {
        let cfg = AssemblyConfig::default();
        let three = [emitted(1, 0.0), emitted(2, 100.0), emitted(3, 1000.0)];
        let samples = make_samples(&three, &cfg);
        assert_eq!(samples.len(), 6);
        assert_eq!(samples.iter().filter(|s| s.is_pair()).count(), 3);
        for s in samples.iter().filter(|s| !s.is_pair()) {
            assert!(s.persons[1].iter().all(|p| p.is_zero() && p.joints.iter().all(|j| j.conf == 0.0)));
        }

        let one = make_samples(&three[..1], &cfg);
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].persons[1].len(), 100);
    }

    #[test]
    fn gating_drops_far_pairs() {
        let cfg = AssemblyConfig { pair_distance: 300.0, ..AssemblyConfig::default() };
        let two = [emitted(1, 0.0), emitted(2, 500.0)];
        let samples = make_samples(&two, &cfg);
        assert_eq!(samples.len(), 2);
        assert!(samples.iter().all(|s| !s.is_pair()));
        let near = [emitted(1, 0.0), emitted(2, 250.0)];
        assert_eq!(make_samples(&near, &cfg).len(), 3);
    }

    #[test]
    fn cap_drops_lowest_scores() {
        use crate::tracking::BBox;
        let d = |s: f64| Detection { bbox: BBox::new(0.0, 0.0, 1.0, 1.0), score: s, pose: CocoPose17::zeroed() };
        let kept = cap_persons(vec![d(0.3), d(0.9), d(0.5), d(0.7)], 2);
        let scores: Vec<f64> = kept.iter().map(|d| d.score).collect();
        assert_eq!(scores, vec![0.9, 0.7]);
    }
}
