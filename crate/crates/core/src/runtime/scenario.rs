//! Seeded synthetic pose scenarios. Bodies are drawn from a fixed standing
//! template (pixel units, y down) with small uniform jitter on every
//! keypoint, so the same name and seed always produce the same frames.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::source::PoseFrame;
use crate::error::{Error, Result};
use crate::geometry::layout::coco;
use crate::geometry::{CocoPose17, Keypoint};
use crate::tracking::{BBox, Detection};

pub const FPS: f64 = 30.0;
pub const DEFAULT_SEED: u64 = 7;

/// Template offsets in body heights, relative to the midpoint of the ankles.
const TEMPLATE: [(f64, f64); 17] = [
    (0.0, -0.88),
    (0.02, -0.90),
    (-0.02, -0.90),
    (0.04, -0.89),
    (-0.04, -0.89),
    (0.10, -0.76),
    (-0.10, -0.76),
    (0.13, -0.61),
    (-0.13, -0.61),
    (0.14, -0.48),
    (-0.14, -0.48),
    (0.06, -0.44),
    (-0.06, -0.44),
    (0.07, -0.22),
    (-0.07, -0.22),
    (0.07, 0.0),
    (-0.07, 0.0),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    SingleStatic,
    TwoPersonPunch,
    Fall,
    CrossingOcclusion,
    ThreePersonLine,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::SingleStatic,
        Scenario::TwoPersonPunch,
        Scenario::Fall,
        Scenario::CrossingOcclusion,
        Scenario::ThreePersonLine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::SingleStatic => "single_static",
            Scenario::TwoPersonPunch => "two_person_punch",
            Scenario::Fall => "fall",
            Scenario::CrossingOcclusion => "crossing_occlusion",
            Scenario::ThreePersonLine => "three_person_line",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::BadSource(format!("unknown scenario {s:?}")))
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Crossing parameters. Person B is hidden for `occlusion_gap` frames
/// starting at `occlusion_start`; person A's score drops to `low_score`
/// for `low_span` frames starting at `low_start`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CrossingParams {
    pub frames: u64,
    pub occlusion_start: u64,
    pub occlusion_gap: u64,
    pub low_start: u64,
    pub low_span: u64,
    pub low_score: f64,
}

impl Default for CrossingParams {
    fn default() -> Self {
        CrossingParams {
            frames: 300,
            occlusion_start: 150,
            occlusion_gap: 60,
            low_start: 60,
            low_span: 5,
            low_score: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Body {
    x: f64,
    ground: f64,
    height: f64,
    /// Rotation about the ankle midpoint, radians; positive tips toward +x.
    tilt: f64,
    /// Horizontal wrist extension (px) for the left and right arm.
    reach: [f64; 2],
    facing: f64,
}

impl Body {
    fn standing(x: f64, ground: f64, height: f64) -> Self {
        Body { x, ground, height, tilt: 0.0, reach: [0.0; 2], facing: 1.0 }
    }
}

struct Gen {
    rng: ChaCha8Rng,
}

impl Gen {
    fn detection(&mut self, b: &Body, score: Option<f64>) -> Detection {
        let (s, c) = (b.tilt.sin(), b.tilt.cos());
        let mut pts = [(0.0, 0.0); 17];
        for (i, &(dx, dy)) in TEMPLATE.iter().enumerate() {
            let mut x = dx * b.height;
            let y = dy * b.height;
            let arm = match i {
                coco::L_WRIST => b.reach[0],
                coco::R_WRIST => b.reach[1],
                coco::L_ELBOW => b.reach[0] / 2.0,
                coco::R_ELBOW => b.reach[1] / 2.0,
                _ => 0.0,
            };
            x += arm * b.facing;
            pts[i] = (b.x + x * c - y * s, b.ground + x * s + y * c);
        }
        let joints = std::array::from_fn(|i| {
            let jx = self.rng.random_range(-0.5..0.5);
            let jy = self.rng.random_range(-0.5..0.5);
            let conf = self.rng.random_range(0.8..0.95);
            Keypoint::new_2d(pts[i].0 + jx, pts[i].1 + jy, conf)
        });
        let pose = CocoPose17::new(joints);
        let pad = 0.05 * b.height;
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for j in &pose.joints {
            x0 = x0.min(j.x);
            y0 = y0.min(j.y);
            x1 = x1.max(j.x);
            y1 = y1.max(j.y);
        }
        let score = score.unwrap_or_else(|| self.rng.random_range(0.85..0.95));
        Detection {
            bbox: BBox::new((x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0 + 2.0 * pad, y1 - y0 + 2.0 * pad),
            score,
            pose,
        }
    }
}

fn frame(index: u64, detections: Vec<Detection>) -> PoseFrame {
    PoseFrame {
        frame_index: index,
        timestamp_ms: (index as f64 * 1000.0 / FPS).round() as i64,
        detections,
        image: None,
    }
}

/// Default frame counts: single_static 430, two_person_punch 300, fall 300,
/// crossing_occlusion 300, three_person_line 130.
pub fn generate(scenario: Scenario, seed: u64) -> Vec<PoseFrame> {
    match scenario {
        Scenario::SingleStatic => single_static(430, seed),
        Scenario::TwoPersonPunch => two_person_punch(300, seed),
        Scenario::Fall => fall(300, seed),
        Scenario::CrossingOcclusion => crossing_occlusion(CrossingParams::default(), seed),
        Scenario::ThreePersonLine => three_person_line(130, seed),
    }
}

pub fn single_static(frames: u64, seed: u64) -> Vec<PoseFrame> {
    let mut g = Gen { rng: ChaCha8Rng::seed_from_u64(seed) };
    let body = Body::standing(640.0, 560.0, 200.0);
    (0..frames).map(|t| frame(t, vec![g.detection(&body, None)])).collect()
}

/// Two people at close range exchanging punches from the second second on.
pub fn two_person_punch(frames: u64, seed: u64) -> Vec<PoseFrame> {
    let mut g = Gen { rng: ChaCha8Rng::seed_from_u64(seed) };
    let reach = |t: u64, phase: f64| {
        if t < 30 {
            0.0
        } else {
            let secs = t as f64 / FPS;
            30.0 * (1.0 - (2.0 * std::f64::consts::PI * 2.5 * secs + phase).cos())
        }
    };
    (0..frames)
        .map(|t| {
            let pi = std::f64::consts::PI;
            let mut a = Body::standing(605.0, 560.0, 200.0);
            a.reach = [reach(t, 0.0), reach(t, pi)];
            let mut b = Body::standing(675.0, 560.0, 200.0);
            b.facing = -1.0;
            b.reach = [reach(t, pi / 2.0), reach(t, 3.0 * pi / 2.0)];
            frame(t, vec![g.detection(&a, None), g.detection(&b, None)])
        })
        .collect()
}

/// Slow walk, then a half-second topple onto the floor at frame 90.
pub fn fall(frames: u64, seed: u64) -> Vec<PoseFrame> {
    let mut g = Gen { rng: ChaCha8Rng::seed_from_u64(seed) };
    (0..frames)
        .map(|t| {
            let mut b = Body::standing(400.0 + t.min(90) as f64, 560.0, 200.0);
            let progress = (t.saturating_sub(90) as f64 / 15.0).min(1.0);
            b.tilt = progress * std::f64::consts::FRAC_PI_2;
            frame(t, vec![g.detection(&b, None)])
        })
        .collect()
}

/// Two people walking past each other in different depth bands.
pub fn crossing_occlusion(p: CrossingParams, seed: u64) -> Vec<PoseFrame> {
    let mut g = Gen { rng: ChaCha8Rng::seed_from_u64(seed) };
    (0..p.frames)
        .map(|t| {
            let a = Body::standing(100.0 + 3.0 * t as f64, 500.0, 200.0);
            let b = Body::standing(1180.0 - 3.0 * t as f64, 430.0, 160.0);
            let low = (p.low_start..p.low_start + p.low_span).contains(&t);
            let mut dets = vec![g.detection(&a, low.then_some(p.low_score))];
            let hidden = (p.occlusion_start..p.occlusion_start + p.occlusion_gap).contains(&t);
            let det_b = g.detection(&b, None);
            if !hidden {
                dets.push(det_b);
            }
            frame(t, dets)
        })
        .collect()
}

/// Three people standing in a row; the outer two are 450 px apart.
pub fn three_person_line(frames: u64, seed: u64) -> Vec<PoseFrame> {
    let mut g = Gen { rng: ChaCha8Rng::seed_from_u64(seed) };
    let bodies = [300.0, 500.0, 750.0].map(|x| Body::standing(x, 560.0, 200.0));
    (0..frames)
        .map(|t| frame(t, bodies.iter().map(|b| g.detection(b, None)).collect()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_frames() {
        for sc in Scenario::ALL {
            assert_eq!(generate(sc, 11), generate(sc, 11), "{sc}");
        }
        assert_ne!(generate(Scenario::Fall, 1), generate(Scenario::Fall, 2));
    }

    #[test]
    fn names_round_trip() {
        for sc in Scenario::ALL {
            assert_eq!(sc.name().parse::<Scenario>().unwrap(), sc);
        }
        assert!("nope".parse::<Scenario>().is_err());
    }

    #[test]
    fn occlusion_hides_person_b() {
        let frames = crossing_occlusion(CrossingParams { occlusion_gap: 61, ..Default::default() }, 1);
        assert_eq!(frames[149].detections.len(), 2);
        assert_eq!(frames[150].detections.len(), 1);
        assert_eq!(frames[210].detections.len(), 1);
        assert_eq!(frames[211].detections.len(), 2);
        assert_eq!(frames[62].detections[0].score, 0.3);
    }

    #[test]
    fn timestamps_follow_nominal_rate() {
        let f = single_static(31, 0);
        assert_eq!(f[30].timestamp_ms, 1000);
        assert_eq!(f[1].timestamp_ms, 33);
    }
}
