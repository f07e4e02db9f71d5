//! Two-stage (high/low score) IoU association with constant-velocity
//! Kalman prediction. Low-score detections are associated in a second pass
//! so short confidence dips do not break a person's identity.

pub mod assignment;
pub mod kalman;

use serde::{Deserialize, Serialize};

use crate::geometry::CocoPose17;
use kalman::{KalmanBoxFilter, KalmanNoise};

pub type TrackId = u64;

/// Axis-aligned box as (center x, center y, width, height) in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BBox { cx, cy, w, h }
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    pub fn corners(&self) -> [f64; 4] {
        [
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        ]
    }

    fn xyah(&self) -> [f64; 4] {
        [self.cx, self.cy, self.w / self.h, self.h]
    }

    fn from_xyah(v: [f64; 4]) -> Self {
        let h = v[3].max(1e-6);
        BBox { cx: v[0], cy: v[1], w: (v[2] * h).max(1e-6), h }
    }

    pub fn is_valid(&self) -> bool {
        self.w > 0.0 && self.h > 0.0 && self.cx.is_finite() && self.cy.is_finite()
    }
}

/// Intersection over union; 0 for degenerate boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let [ax0, ay0, ax1, ay1] = a.corners();
    let [bx0, by0, bx1, by1] = b.corners();
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(0.0);
    let ih = (ay1.min(by1) - ay0.max(by0)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub score: f64,
    pub pose: CocoPose17,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub det_conf_floor: f64,
    pub high_score_thresh: f64,
    /// Minimum IoU for first-stage (high-score) matches.
    pub match_iou_min_high: f64,
    /// Minimum IoU for second-stage (low-score) matches.
    pub match_iou_min_low: f64,
    /// LOST tracks missing for more than this many frames are removed.
    pub lost_retention_frames: u64,
    /// Detector-side NMS overlap threshold.
    pub nms_iou: f64,
    pub noise: KalmanNoise,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            det_conf_floor: 0.2,
            high_score_thresh: 0.5,
            match_iou_min_high: 0.2,
            match_iou_min_low: 0.5,
            lost_retention_frames: 60,
            nms_iou: 0.9,
            noise: KalmanNoise::default(),
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> crate::Result<()> {
        let ok = 0.0 <= self.det_conf_floor
            && self.det_conf_floor <= self.high_score_thresh
            && self.high_score_thresh <= 1.0
            && (0.0..=1.0).contains(&self.match_iou_min_high)
            && (0.0..=1.0).contains(&self.match_iou_min_low)
            && (0.0..=1.0).contains(&self.nms_iou);
        if ok {
            Ok(())
        } else {
            Err(crate::Error::Config(format!("inconsistent tracker thresholds: {self:?}")))
        }
    }
}

/// Applies the score floor and greedy NMS. Survivors keep their input order.
pub fn filter_detections(dets: &[Detection], cfg: &TrackerConfig) -> Vec<Detection> {
    let mut order: Vec<usize> = (0..dets.len())
        .filter(|&i| dets[i].score >= cfg.det_conf_floor && dets[i].bbox.is_valid())
        .collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    let mut keep: Vec<usize> = Vec::new();
    for i in order {
        if keep.iter().all(|&k| iou(&dets[k].bbox, &dets[i].bbox) <= cfg.nms_iou) {
            keep.push(i);
        }
    }
    keep.sort_unstable();
    keep.into_iter().map(|i| dets[i].clone()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TrackStatus {
    Tentative,
    Active,
    Lost,
}

#[derive(Debug, Clone)]
pub struct TrackState {
    pub track_id: TrackId,
    pub filter: KalmanBoxFilter,
    pub status: TrackStatus,
    pub last_seen: u64,
    pub score: f64,
}

impl TrackState {
    pub fn bbox(&self) -> BBox {
        BBox::from_xyah(self.filter.xyah())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackMatch {
    pub track_id: TrackId,
    pub detection: Detection,
}

#[derive(Debug)]
pub struct Tracker {
    cfg: TrackerConfig,
    tracks: Vec<TrackState>,
    next_id: TrackId,
    removed: Vec<TrackId>,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Self {
        Tracker { cfg, tracks: Vec::new(), next_id: 1, removed: Vec::new() }
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    /// Live tracks sorted by id.
    pub fn tracks(&self) -> &[TrackState] {
        &self.tracks
    }

    /// Ids removed during the most recent `step`.
    pub fn removed_last_step(&self) -> &[TrackId] {
        &self.removed
    }

    /// Advances every track one frame; returns the predicted boxes.
    pub fn predict(&mut self) -> Vec<(TrackId, BBox)> {
        self.tracks
            .iter_mut()
            .map(|t| {
                t.filter.predict();
                (t.track_id, t.bbox())
            })
            .collect()
    }

    /// One association step. `detections` should already be filtered by
    /// [`filter_detections`]. Returns matches (including newborn tracks)
    /// sorted by track id.
    pub fn step(&mut self, detections: &[Detection], frame: u64) -> Vec<TrackMatch> {
        self.removed.clear();
        let predicted = self.predict();

        let (high, low): (Vec<usize>, Vec<usize>) = (0..detections.len())
            .filter(|&i| detections[i].score >= self.cfg.det_conf_floor)
            .partition(|&i| detections[i].score >= self.cfg.high_score_thresh);

        let mut track_matched = vec![None::<usize>; self.tracks.len()];

        // stage 1: high-score detections against every live track
        let pool: Vec<usize> = (0..self.tracks.len()).collect();
        let stage1 = associate(&predicted, &pool, detections, &high, self.cfg.match_iou_min_high);
        let mut high_used = vec![false; high.len()];
        for (t, d) in stage1 {
            track_matched[pool[t]] = Some(high[d]);
            high_used[d] = true;
        }

        // stage 2: low-score detections against the leftovers
        let rest: Vec<usize> = (0..self.tracks.len())
            .filter(|&t| track_matched[t].is_none() && self.tracks[t].status != TrackStatus::Tentative)
            .collect();
        for (t, d) in associate(&predicted, &rest, detections, &low, self.cfg.match_iou_min_low) {
            track_matched[rest[t]] = Some(low[d]);
        }

        let mut out = Vec::new();
        let mut keep = Vec::with_capacity(self.tracks.len());
        for (mut track, matched) in std::mem::take(&mut self.tracks).into_iter().zip(track_matched) {
            match matched {
                Some(d) => {
                    let det = &detections[d];
                    track.filter.update(det.bbox.xyah());
                    track.status = TrackStatus::Active;
                    track.last_seen = frame;
                    track.score = det.score;
                    out.push(TrackMatch { track_id: track.track_id, detection: det.clone() });
                    keep.push(track);
                }
                None => match track.status {
                    // unconfirmed tracks that miss their second frame are dropped
                    TrackStatus::Tentative => self.removed.push(track.track_id),
                    _ => {
                        track.status = TrackStatus::Lost;
                        if frame.saturating_sub(track.last_seen) > self.cfg.lost_retention_frames {
                            self.removed.push(track.track_id);
                        } else {
                            keep.push(track);
                        }
                    }
                },
            }
        }
        self.tracks = keep;

        for (k, &d) in high.iter().enumerate() {
            if high_used[k] {
                continue;
            }
            let det = &detections[d];
            let id = self.next_id;
            self.next_id += 1;
            self.tracks.push(TrackState {
                track_id: id,
                filter: KalmanBoxFilter::new(det.bbox.xyah(), self.cfg.noise),
                status: TrackStatus::Tentative,
                last_seen: frame,
                score: det.score,
            });
            out.push(TrackMatch { track_id: id, detection: det.clone() });
        }
        out.sort_by_key(|m| m.track_id);
        out
    }
}

/// Returns `(index into track_pool, index into det_pool)` pairs.
fn associate(
    predicted: &[(TrackId, BBox)],
    track_pool: &[usize],
    detections: &[Detection],
    det_pool: &[usize],
    min_iou: f64,
) -> Vec<(usize, usize)> {
    if track_pool.is_empty() || det_pool.is_empty() {
        return Vec::new();
    }
    let cost: Vec<Vec<f64>> = track_pool
        .iter()
        .map(|&t| det_pool.iter().map(|&d| 1.0 - iou(&predicted[t].1, &detections[d].bbox)).collect())
        .collect();
    assignment::solve(&cost, 1.0 - min_iou)
}
