use edgeguard_core::clip::{cap_persons, make_samples, AssemblyConfig, ClipAssembler, ClipSample};
use edgeguard_core::runtime::scenario::{single_static, three_person_line};
use edgeguard_core::runtime::PoseFrame;
use edgeguard_core::tracking::{filter_detections, Tracker, TrackerConfig};

/// Runs tracker and assembler over `frames`; returns the samples of each
/// emission tick.
fn assemble(frames: &[PoseFrame], cfg: AssemblyConfig) -> Vec<Vec<ClipSample>> {
    let tcfg = TrackerConfig::default();
    let mut tracker = Tracker::new(tcfg);
    let mut asm = ClipAssembler::new(cfg);
    let mut ticks = Vec::new();
    for f in frames {
        let dets = cap_persons(filter_detections(&f.detections, &tcfg), cfg.max_persons);
        let matches: Vec<_> =
            tracker.step(&dets, f.frame_index).into_iter().map(|m| (m.track_id, m.detection.pose)).collect();
        let emitted = asm.ingest_frame(&matches, f.frame_index, f.timestamp_ms);
        asm.prune_lost();
        if !emitted.is_empty() {
            ticks.push(make_samples(&emitted, &cfg));
        }
    }
    ticks
}

#[test]
fn emission_count_follows_stride() {
    for n in [99u64, 100, 129, 130, 430] {
        let ticks = assemble(&single_static(n, 4), AssemblyConfig::default());
        let want = if n < 100 { 0 } else { 1 + (n as usize - 100) / 30 };
        assert_eq!(ticks.len(), want, "N={n}");
        assert!(ticks.iter().all(|t| t.len() == 1 && !t[0].is_pair()));
    }
}

#[test]
fn emissions_are_thirty_frames_apart() {
    let ticks = assemble(&single_static(430, 4), AssemblyConfig::default());
    let at: Vec<u64> = ticks.iter().map(|t| t[0].emitted_at).collect();
    assert_eq!(at[0], 99);
    assert!(at.windows(2).all(|w| w[1] - w[0] == 30), "{at:?}");
    for t in &ticks {
        let s = &t[0];
        assert_eq!(s.frame_span.1 - s.frame_span.0, 99);
        assert_eq!(s.persons[0].len(), 100);
    }
}

#[test]
fn three_people_give_six_samples_without_gating() {
    let ticks = assemble(&three_person_line(100, 9), AssemblyConfig::default());
    assert_eq!(ticks.len(), 1);
    let samples = &ticks[0];
    assert_eq!(samples.len(), 6);
    assert_eq!(samples.iter().filter(|s| s.is_pair()).count(), 3);
    for s in samples.iter().filter(|s| !s.is_pair()) {
        assert!(s.persons[1].iter().all(|p| p.is_zero()));
    }
}

#[test]
fn gating_at_300_drops_the_far_pair() {
    let cfg = AssemblyConfig { pair_distance: 300.0, ..Default::default() };
    let ticks = assemble(&three_person_line(100, 9), cfg);
    let samples = &ticks[0];
    assert_eq!(samples.len(), 5);
    let pairs: Vec<Vec<u64>> = samples.iter().filter(|s| s.is_pair()).map(|s| s.track_ids.clone()).collect();
    // ids follow left-to-right detection order: 1 at x=300, 2 at 500, 3 at 750
    assert_eq!(pairs, vec![vec![1, 2], vec![2, 3]]);
}
