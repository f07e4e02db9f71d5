//! Inputs shared by the benchmarks.

use edgeguard_core::geometry::CocoPose17;
use edgeguard_core::runtime::scenario::{self, Scenario};
use edgeguard_core::runtime::PoseFrame;

pub fn frames(sc: Scenario) -> Vec<PoseFrame> {
    scenario::generate(sc, scenario::DEFAULT_SEED)
}

/// The first person's pose over `n` consecutive frames of the punch scenario.
pub fn pose_clip(n: usize) -> Vec<CocoPose17> {
    frames(Scenario::TwoPersonPunch).iter().filter_map(|f| f.detections.first().map(|d| d.pose)).take(n).collect()
}
