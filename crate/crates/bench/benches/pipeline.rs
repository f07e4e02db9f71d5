use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use edgeguard_bench::{frames, pose_clip};
use edgeguard_core::geometry::{remap_full, LifterHandle};
use edgeguard_core::preprocess::{pre_normalize_3d, uniform_sample_decode, NtuSample};
use edgeguard_core::runtime::scenario::Scenario;
use edgeguard_core::runtime::{run_pipeline, FrameSource, NullSink, PipelineConfig, SourceDescriptor};
use edgeguard_core::tracking::{filter_detections, Tracker, TrackerConfig};
use edgeguard_core::vlm::parse_verdict;

fn geometry(c: &mut Criterion) {
    let clip = pose_clip(100);
    let mut g = c.benchmark_group("geometry");
    g.throughput(Throughput::Elements(clip.len() as u64));
    g.bench_function("remap_full_pseudo3d_100", |b| b.iter(|| remap_full(black_box(&clip), &LifterHandle::Pseudo3d).unwrap()));
    g.finish();
}

fn preprocess(c: &mut Criterion) {
    let ntu = remap_full(&pose_clip(100), &LifterHandle::Pseudo3d).unwrap();
    let sample = NtuSample::new(ntu.clone(), ntu.clone()).unwrap();
    let short = NtuSample::new(ntu[..63].to_vec(), ntu[..63].to_vec()).unwrap();
    let mut g = c.benchmark_group("preprocess");
    g.bench_function("pre_normalize_3d", |b| b.iter(|| pre_normalize_3d(black_box(&sample)).unwrap()));
    g.bench_function("uniform_sample_decode_63_to_100", |b| b.iter(|| uniform_sample_decode(black_box(&short)).unwrap()));
    g.finish();
}

fn tracking(c: &mut Criterion) {
    let fr = frames(Scenario::CrossingOcclusion);
    let cfg = TrackerConfig::default();
    let dets: Vec<_> = fr.iter().map(|f| filter_detections(&f.detections, &cfg)).collect();
    let mut g = c.benchmark_group("tracking");
    g.throughput(Throughput::Elements(dets.len() as u64));
    g.bench_function("crossing_occlusion_sequence", |b| {
        b.iter_batched(
            || Tracker::new(cfg),
            |mut t| {
                for (i, d) in dets.iter().enumerate() {
                    black_box(t.step(d, i as u64));
                }
            },
            BatchSize::SmallInput,
        )
    });
    g.finish();
}

fn end_to_end(c: &mut Criterion) {
    let fr = frames(Scenario::TwoPersonPunch);
    let cfg = PipelineConfig { paced: false, overlay: false, ..Default::default() };
    let mut g = c.benchmark_group("pipeline");
    g.sample_size(10);
    g.throughput(Throughput::Elements(fr.len() as u64));
    g.bench_function("two_person_punch_unpaced", |b| {
        b.iter_batched(
            || {
                FrameSource::from_frames(
                    SourceDescriptor::Scenario { name: "two_person_punch".into(), seed: 7 },
                    30.0,
                    fr.clone(),
                )
            },
            |src| run_pipeline(src, &cfg, None, Arc::new(NullSink)).unwrap(),
            BatchSize::LargeInput,
        )
    });
    g.finish();
}

fn verdicts(c: &mut Criterion) {
    let structured = r#"Reasoning first. {"level": "WARNING", "summary": "A person stumbles near the curb."}"#;
    let prose = "The scene shows two people. One of them does not appear to be fighting, but there is a sudden shove.";
    let mut g = c.benchmark_group("verdict");
    g.bench_function("structured", |b| b.iter(|| parse_verdict(black_box(structured))));
    g.bench_function("fallback", |b| b.iter(|| parse_verdict(black_box(prose))));
    g.finish();
}

criterion_group!(benches, geometry, preprocess, tracking, end_to_end, verdicts);
criterion_main!(benches);
