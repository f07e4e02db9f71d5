use std::process::Command;

use serde_json::Value;

fn edgeguard() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_edgeguard"));
    c.env("RUST_LOG", "warn");
    for (k, _) in std::env::vars() {
        if k.starts_with("SKEL_") || k.starts_with("VLM_") || k.starts_with("EDGEGUARD_") {
            c.env_remove(k);
        }
    }
    c
}

fn json_out(c: &mut Command) -> Value {
    let out = c.output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn gen_fixture_then_replay_reports_danger() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("punch.jsonl");
    let out = edgeguard().args(["gen-fixture", "two_person_punch", "--seed", "7", "-o"]).arg(&file).output().unwrap();
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(&file).unwrap().lines().count(), 300);

    let alerts = dir.path().join("alerts");
    let report = json_out(edgeguard().arg("replay").arg(&file).args(["--backend", "skel", "--alerts"]).arg(&alerts));
    assert_eq!(report["frames_in"], 300);
    assert!(report["alerts_by_level"]["DANGER"].as_u64().unwrap() >= 1, "{report}");
    let clip = report["alerts"][0]["clip_path"].as_str().unwrap();
    assert!(std::path::Path::new(clip).starts_with(&alerts));
}

#[test]
fn gen_fixture_all_writes_every_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let out = edgeguard().args(["gen-fixture", "all", "--out"]).arg(dir.path()).output().unwrap();
    assert!(out.status.success());
    let mut names: Vec<String> =
        std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(
        names,
        ["crossing_occlusion.jsonl", "fall.jsonl", "single_static.jsonl", "three_person_line.jsonl", "two_person_punch.jsonl"]
    );
}

#[test]
fn bench_prints_metrics_snapshot() {
    let m = json_out(edgeguard().args(["bench", "two_person_punch"]));
    assert_eq!(m["frames_processed"], 300);
    assert!(m["efps"].as_f64().unwrap() > 0.0);
    for c in m["clip_latencies"].as_array().unwrap() {
        let (e, b, i) = (c["end_to_end_ms"].as_f64().unwrap(), c["buffer_fill_ms"].as_f64().unwrap(), c["inference_ms"].as_f64().unwrap());
        assert_eq!(e, b + i);
    }
}

#[test]
fn config_shows_origins_with_env_over_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("edgeguard.toml");
    std::fs::write(&file, "[skel]\nclip_stride = 20\ndanger_threshold = 0.4\n").unwrap();
    let out = edgeguard()
        .arg("--config")
        .arg(&file)
        .arg("config")
        .env("SKEL_CLIP_STRIDE", "15")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let line = |k: &str| text.lines().find(|l| l.starts_with(&format!("{k}="))).unwrap().to_string();
    assert_eq!(line("SKEL_CLIP_STRIDE"), "SKEL_CLIP_STRIDE=15\t# Env");
    assert_eq!(line("SKEL_DANGER_THRESHOLD"), "SKEL_DANGER_THRESHOLD=0.4\t# File");
    assert_eq!(line("SKEL_CLIP_LEN"), "SKEL_CLIP_LEN=100\t# Default");
}

#[test]
fn bad_inputs_fail_cleanly() {
    let out = edgeguard().args(["bench", "nope"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown scenario"));
    let out = edgeguard().args(["replay", "/no/such.jsonl"]).output().unwrap();
    assert!(!out.status.success());
    let out = edgeguard().args(["config"]).env("SKEL_CLIP_STRIDE", "zero").output().unwrap();
    assert!(!out.status.success());
}
