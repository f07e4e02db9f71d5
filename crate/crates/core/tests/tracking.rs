use std::collections::BTreeMap;

use edgeguard_core::runtime::scenario::{crossing_occlusion, CrossingParams};
use edgeguard_core::runtime::PoseFrame;
use edgeguard_core::tracking::{filter_detections, TrackId, Tracker, TrackerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Who {
    A,
    B,
}

/// A walks on the lower ground line, B on the upper one.
fn who(bottom: f64) -> Who {
    if bottom > 475.0 {
        Who::A
    } else {
        Who::B
    }
}

/// Per frame: which person carried which id (absent when unmatched).
fn run(frames: &[PoseFrame], cfg: TrackerConfig) -> Vec<BTreeMap<Who, TrackId>> {
    let mut t = Tracker::new(cfg);
    frames
        .iter()
        .map(|f| {
            let dets = filter_detections(&f.detections, &cfg);
            t.step(&dets, f.frame_index)
                .into_iter()
                .map(|m| (who(m.detection.bbox.corners()[3]), m.track_id))
                .collect()
        })
        .collect()
}

fn ids_of(trace: &[BTreeMap<Who, TrackId>], w: Who) -> Vec<TrackId> {
    let mut ids: Vec<TrackId> = trace.iter().filter_map(|m| m.get(&w).copied()).collect();
    ids.dedup();
    ids
}

#[test]
fn sixty_frame_occlusion_keeps_both_ids() {
    let frames = crossing_occlusion(CrossingParams { occlusion_gap: 60, ..Default::default() }, 1);
    let trace = run(&frames, TrackerConfig::default());
    assert_eq!(ids_of(&trace, Who::A).len(), 1, "A changed id");
    assert_eq!(ids_of(&trace, Who::B).len(), 1, "B changed id");
    assert_ne!(ids_of(&trace, Who::A), ids_of(&trace, Who::B));
    assert!((150..210).all(|f| !trace[f].contains_key(&Who::B)));
    assert!(trace[210].contains_key(&Who::B));
}

#[test]
fn sixty_one_frame_occlusion_gives_b_a_new_id() {
    let frames = crossing_occlusion(CrossingParams { occlusion_gap: 61, ..Default::default() }, 1);
    let trace = run(&frames, TrackerConfig::default());
    assert_eq!(ids_of(&trace, Who::A).len(), 1);
    let b = ids_of(&trace, Who::B);
    assert_eq!(b.len(), 2, "{b:?}");
    assert!(b[1] > b[0]);
}

#[test]
fn low_score_span_is_bridged_by_second_stage() {
    let frames = crossing_occlusion(CrossingParams::default(), 2);
    let full = run(&frames, TrackerConfig::default());
    let a = full[0][&Who::A];
    assert!((60..65).all(|f| full[f].get(&Who::A) == Some(&a)), "dip frames matched to A's id");
}

#[test]
fn high_only_ablation_loses_the_dip() {
    let frames = crossing_occlusion(CrossingParams::default(), 2);
    let cfg = TrackerConfig { det_conf_floor: 0.5, ..Default::default() };
    let trace = run(&frames, cfg);
    assert!((60..65).all(|f| !trace[f].contains_key(&Who::A)), "A must be unmatched during the dip");
    assert!(trace[59].contains_key(&Who::A) && trace[65].contains_key(&Who::A));
}
