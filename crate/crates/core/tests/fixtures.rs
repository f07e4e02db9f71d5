use std::path::PathBuf;
use std::sync::Arc;

use edgeguard_core::runtime::scenario::{self, Scenario};
use edgeguard_core::runtime::{open_source, run_pipeline, write_replay, FrameSource, NullSink, PipelineConfig, SourceDescriptor};

fn fixture(sc: Scenario) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(format!("{}.jsonl", sc.name()))
}

#[test]
fn checked_in_fixtures_match_the_generator() {
    let dir = tempfile::tempdir().unwrap();
    for sc in Scenario::ALL {
        let fresh = dir.path().join("fresh.jsonl");
        write_replay(&fresh, &scenario::generate(sc, scenario::DEFAULT_SEED)).unwrap();
        let want = std::fs::read(&fresh).unwrap();
        let got = std::fs::read(fixture(sc)).unwrap_or_else(|e| panic!("{}: {e}", sc.name()));
        assert!(got == want, "{} differs from its generator; regenerate with gen-fixture", sc.name());
    }
}

#[test]
fn replaying_a_fixture_equals_running_the_scenario() {
    let cfg = PipelineConfig { paced: false, ..Default::default() };
    let sc = Scenario::TwoPersonPunch;
    let replay = open_source(&SourceDescriptor::Replay { path: fixture(sc) }, 30.0).unwrap();
    let direct = FrameSource::from_frames(
        SourceDescriptor::Scenario { name: sc.name().into(), seed: scenario::DEFAULT_SEED },
        30.0,
        scenario::generate(sc, scenario::DEFAULT_SEED),
    );
    let a = run_pipeline(replay, &cfg, None, Arc::new(NullSink)).unwrap();
    let b = run_pipeline(direct, &cfg, None, Arc::new(NullSink)).unwrap();
    assert_eq!(a.frames_in, 300);
    assert_eq!((a.clips_emitted, &a.assessments_by_level), (b.clips_emitted, &b.assessments_by_level));
    let key = |r: &edgeguard_core::runtime::SessionReport| {
        r.alerts.iter().map(|x| (x.level, x.track_ids.clone(), x.frame_span)).collect::<Vec<_>>()
    };
    assert_eq!(key(&a), key(&b));
}
