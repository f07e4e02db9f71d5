//! Deterministic kinematic stand-in for the GCN classifier. It looks at
//! wrist speed, inter-person distance, and root drop, and emits a fixed
//! distribution per rule. The constants are fixture-tuning choices.

use serde::{Deserialize, Serialize};

use super::{ActionClass, ClassDistribution};
use crate::geometry::layout::ntu;
use crate::preprocess::NtuSample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockKinematicConfig {
    pub num_classes: usize,
    /// Mean wrist displacement per frame, in torso lengths.
    pub motion_threshold: f64,
    /// Median root distance between the two persons (normalized units).
    pub proximity_threshold: f64,
    /// Root drop within the clip, in torso lengths.
    pub fall_drop: f64,
    pub strike_mass: f64,
    pub push_mass: f64,
    pub fall_mass: f64,
}

impl Default for MockKinematicConfig {
    fn default() -> Self {
        MockKinematicConfig {
            num_classes: 60,
            motion_threshold: 0.08,
            proximity_threshold: 1.0,
            fall_drop: 0.5,
            strike_mass: 0.6,
            push_mass: 0.2,
            fall_mass: 0.7,
        }
    }
}

const STRIKE: ActionClass = ActionClass(50);
const PUSH: ActionClass = ActionClass(52);
const FALL: ActionClass = ActionClass(43);
const WRISTS: [usize; 2] = [ntu::L_WRIST, ntu::R_WRIST];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicFeatures {
    pub persons: usize,
    /// Mean per-frame wrist displacement normalized by torso length.
    pub wrist_speed: f64,
    /// Median root distance; infinite for single-person samples.
    pub root_distance: f64,
    /// Largest downward root movement (later minus earlier y), in torso lengths.
    pub root_drop: f64,
}

fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn torso(person: &[crate::geometry::NtuPose25]) -> f64 {
    let lens: Vec<f64> = person
        .iter()
        .filter(|p| !p.is_zero())
        .map(|p| dist3(p.joints[ntu::SPINE_SHOULDER].xyz(), p.joints[ntu::SPINE_BASE].xyz()))
        .collect();
    if lens.is_empty() {
        0.0
    } else {
        lens.iter().sum::<f64>() / lens.len() as f64
    }
}

impl KinematicFeatures {
    pub fn extract(s: &NtuSample) -> Self {
        let present: Vec<usize> = (0..2).filter(|&m| s.valid_count(m) > 0).collect();

        let mut speeds = Vec::new();
        for &m in &present {
            let person = &s.persons[m];
            let t = torso(person);
            if t <= 0.0 {
                continue;
            }
            for w in person.windows(2) {
                if w[0].is_zero() || w[1].is_zero() {
                    continue;
                }
                for j in WRISTS {
                    speeds.push(dist3(w[1].joints[j].xyz(), w[0].joints[j].xyz()) / t);
                }
            }
        }
        let wrist_speed =
            if speeds.is_empty() { 0.0 } else { speeds.iter().sum::<f64>() / speeds.len() as f64 };

        let root_distance = if present.len() == 2 {
            let mut d: Vec<f64> = s.persons[0]
                .iter()
                .zip(&s.persons[1])
                .filter(|(a, b)| !a.is_zero() && !b.is_zero())
                .map(|(a, b)| dist3(a.joints[ntu::SPINE_MID].xyz(), b.joints[ntu::SPINE_MID].xyz()))
                .collect();
            d.sort_by(f64::total_cmp);
            match d.len() {
                0 => f64::INFINITY,
                n if n % 2 == 1 => d[n / 2],
                n => (d[n / 2 - 1] + d[n / 2]) / 2.0,
            }
        } else {
            f64::INFINITY
        };

        let root_drop = match present.as_slice() {
            [m] => {
                let t = torso(&s.persons[*m]);
                let mut highest = f64::INFINITY;
                let mut drop = 0.0f64;
                for p in s.persons[*m].iter().filter(|p| !p.is_zero()) {
                    let y = p.joints[ntu::SPINE_MID].y;
                    highest = highest.min(y);
                    drop = drop.max(y - highest);
                }
                if t > 0.0 {
                    drop / t
                } else {
                    0.0
                }
            }
            _ => 0.0,
        };

        KinematicFeatures { persons: present.len(), wrist_speed, root_distance, root_drop }
    }
}

/// Expects a normalized, resampled sample.
pub fn mock_kinematic_classifier(s: &NtuSample, cfg: &MockKinematicConfig) -> ClassDistribution {
    let f = KinematicFeatures::extract(s);
    let masses: Vec<(ActionClass, f64)> = if f.persons == 2
        && f.wrist_speed > cfg.motion_threshold
        && f.root_distance < cfg.proximity_threshold
    {
        vec![(STRIKE, cfg.strike_mass), (PUSH, cfg.push_mass)]
    } else if f.persons == 1 && f.root_drop > cfg.fall_drop {
        vec![(FALL, cfg.fall_mass)]
    } else {
        Vec::new()
    };
    ClassDistribution::concentrated(cfg.num_classes, &masses)
        .unwrap_or_else(|_| ClassDistribution::uniform(cfg.num_classes))
}
