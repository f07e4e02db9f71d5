mod common;

use std::time::Duration;

use chrono::{TimeZone, Utc};
use common::{server, server_at, Client};
use edgeguard_core::risk::RiskLevel;
use edgeguard_core::runtime::artifact::parse_clip;
use edgeguard_core::runtime::{scenario, write_replay};
use edgeguard_core::storage::{AlertRecord, Backend};
use serde_json::{json, Value};

const T: Duration = Duration::from_secs(30);

fn code(v: &Value) -> &str {
    v["error"].as_str().unwrap_or_default()
}

#[test]
fn double_start_and_double_stop() {
    let (_dir, _srv, c) = server(|cfg| cfg.skel.paced = true);
    let (s, first) = c.start("/skel-api", "scenario:two_person_punch");
    assert_eq!(s, 200, "{first}");
    let (s, again) = c.start("/skel-api", "scenario:fall");
    assert_eq!((s, code(&again)), (409, "ALREADY_RUNNING"));
    // the other backend is independent
    let (_, vlm_stats) = c.get("/api/stats");
    assert_eq!(vlm_stats["running"], false);

    std::thread::sleep(Duration::from_millis(400));
    let (s, stopped) = c.post_empty("/skel-api/stream/stop");
    assert_eq!(s, 200, "{stopped}");
    assert_eq!(stopped["session_id"], first["session_id"]);
    assert!(stopped["stopped_at"].is_string());
    let report = &stopped["report"];
    assert_eq!(report["stopped_early"], true);
    let frames_in = report["frames_in"].as_u64().unwrap();
    assert!(frames_in > 0 && frames_in < 300, "partial run saw {frames_in} frames");
    assert!(report["frames_processed"].as_u64().unwrap() <= frames_in);

    let (s, again) = c.post_empty("/skel-api/stream/stop");
    assert_eq!((s, code(&again)), (409, "NOT_RUNNING"));
    let (s, after) = c.get("/skel-api/stats");
    assert_eq!(s, 200);
    assert_eq!(after["running"], false);
    assert_eq!(after["session"]["session_id"], first["session_id"]);
    // frozen after stop
    std::thread::sleep(Duration::from_millis(150));
    assert_eq!(c.get("/skel-api/stats").1["metrics"]["frames_in"], after["metrics"]["frames_in"]);
}

#[test]
fn stop_on_idle_backend_is_not_running() {
    let (_dir, _srv, c) = server(|_| {});
    for prefix in ["/skel-api", "/api"] {
        let (s, v) = c.post_empty(&format!("{prefix}/stream/stop"));
        assert_eq!((s, code(&v)), (409, "NOT_RUNNING"));
    }
}

#[test]
fn fresh_stats_are_zeroed_and_grow_during_a_run() {
    let (_dir, _srv, c) = server(|cfg| cfg.skel.paced = true);
    let (s, fresh) = c.get("/skel-api/stats");
    assert_eq!(s, 200);
    assert_eq!(fresh["running"], false);
    assert!(fresh["session"].is_null());
    let m = &fresh["metrics"];
    for k in ["frames_in", "frames_processed", "frames_dropped", "clips_emitted", "samples_classified"] {
        assert_eq!(m[k], 0, "{k}");
    }
    assert_eq!(m["efps"], 0.0);

    c.start("/skel-api", "scenario:single_static");
    std::thread::sleep(Duration::from_millis(300));
    let a = c.get("/skel-api/stats").1["metrics"]["frames_in"].as_u64().unwrap();
    std::thread::sleep(Duration::from_millis(300));
    let b = c.get("/skel-api/stats").1["metrics"]["frames_in"].as_u64().unwrap();
    assert!(b > a, "frames_in did not grow: {a} -> {b}");
    c.post_empty("/skel-api/stream/stop");
}

#[test]
fn punch_alert_is_listed_with_downloadable_artifacts() {
    let (_dir, _srv, c) = server(|_| {});
    let (s, session) = c.start("/skel-api", "scenario:two_person_punch");
    assert_eq!(s, 200, "{session}");
    let stats = c.wait_idle("/skel-api", T);
    assert_eq!(stats["metrics"]["frames_in"], 300);

    let (s, page) = c.get("/skel-api/alerts");
    assert_eq!(s, 200);
    let items = page["items"].as_array().unwrap();
    let danger: Vec<&Value> = items.iter().filter(|a| a["level"] == "DANGER").collect();
    assert!(!danger.is_empty(), "{page}");
    let a = danger[0];
    assert_eq!(a["backend"], "SKELETON");
    assert_eq!(a["session_id"], session["session_id"]);
    assert_eq!(a["extra"]["track_ids"].as_array().unwrap().len(), 2);
    let id = a["alert_id"].as_str().unwrap();

    let (s, bytes) = c.get_bytes(&format!("/skel-api/alerts/{id}/clip"));
    assert_eq!(s, 200);
    let (header, frames) = parse_clip(&bytes).unwrap();
    assert_eq!(header.level, RiskLevel::Danger);
    assert_eq!(frames.len(), header.frame_count);
    let (s, png) = c.get_bytes(&format!("/skel-api/alerts/{id}/thumbnail"));
    assert_eq!(s, 200);
    assert_eq!(&png[..8], b"\x89PNG\r\n\x1a\n");

    // route isolation: the VLM prefix neither lists nor serves skeleton alerts
    assert_eq!(c.get("/api/alerts").1["total"], 0);
    assert_eq!(c.get(&format!("/api/alerts/{id}")).0, 404);
    assert_eq!(c.get_bytes(&format!("/api/alerts/{id}/clip")).0, 404);

    let sessions = c.get("/skel-api/sessions").1;
    assert_eq!(sessions[0]["session_id"], session["session_id"]);
    assert_eq!(sessions[0]["report"]["stopped_early"], false);
}

#[test]
fn fall_warns_and_static_is_quiet() {
    let (_dir, _srv, c) = server(|_| {});
    c.start("/skel-api", "scenario:fall");
    c.wait_idle("/skel-api", T);
    let page = c.get("/skel-api/alerts?level=warning").1;
    assert!(page["total"].as_u64().unwrap() >= 1);
    assert_eq!(page["items"][0]["extra"]["top_class"], 43);
    assert_eq!(c.get("/skel-api/alerts?level=DANGER").1["total"], 0);

    let before = c.get("/skel-api/alerts").1["total"].clone();
    c.start("/skel-api", "scenario:single_static");
    c.wait_idle("/skel-api", T);
    assert_eq!(c.get("/skel-api/alerts").1["total"], before);
}

fn fake_alert(dir: &std::path::Path, n: u32, level: RiskLevel, backend: Backend) -> AlertRecord {
    let clip = dir.join(format!("c{n}.egclip"));
    let thumb = dir.join(format!("t{n}.png"));
    std::fs::write(&clip, b"x").unwrap();
    std::fs::write(&thumb, b"x").unwrap();
    AlertRecord {
        alert_id: format!("alert-{n:02}"),
        session_id: "s".into(),
        created_at: Utc.timestamp_opt(1_700_000_000 + n as i64, 0).unwrap(),
        level,
        summary: format!("alert {n}"),
        clip_path: clip,
        thumbnail_path: thumb,
        backend,
        frame_span: (0, 99),
        event_ts_ms: 0,
        extra: json!({}),
    }
}

#[test]
fn pagination_matches_oracle() {
    let (dir, srv, c) = server(|_| {});
    let alerts_dir = dir.path().join("alerts/skel");
    std::fs::create_dir_all(&alerts_dir).unwrap();
    let store = srv.service().store();
    let levels = [RiskLevel::Danger, RiskLevel::Warning, RiskLevel::Danger, RiskLevel::Warning, RiskLevel::Danger];
    for (n, l) in levels.iter().enumerate() {
        store.insert_alert(fake_alert(&alerts_dir, n as u32 + 1, *l, Backend::Skeleton)).unwrap();
    }
    store.insert_alert(fake_alert(&alerts_dir, 9, RiskLevel::Danger, Backend::Vlm)).unwrap();

    let ids = |v: &Value| -> Vec<String> {
        v["items"].as_array().unwrap().iter().map(|a| a["alert_id"].as_str().unwrap().to_string()).collect()
    };
    let empty = c.get("/skel-api/alerts?limit=2&offset=10").1;
    assert_eq!(ids(&empty), Vec::<String>::new());
    let all = c.get("/skel-api/alerts").1;
    assert_eq!(all["total"], 5);
    assert_eq!(ids(&all), ["alert-05", "alert-04", "alert-03", "alert-02", "alert-01"]);
    let page = c.get("/skel-api/alerts?limit=2&offset=2").1;
    assert_eq!(ids(&page), ["alert-03", "alert-02"]);
    assert_eq!(page["offset"], 2);
    let danger = c.get("/skel-api/alerts?level=DANGER").1;
    assert_eq!(ids(&danger), ["alert-05", "alert-03", "alert-01"]);
    assert_eq!(ids(&c.get("/api/alerts").1), ["alert-09"]);
    let (s, bad) = c.get("/skel-api/alerts?level=PURPLE");
    assert_eq!((s, code(&bad)), (400, "BAD_REQUEST"));
    let (s, _) = c.get("/skel-api/alerts?limit=abc");
    assert_eq!(s, 400);
}

#[test]
fn alerts_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (srv, c) = server_at(dir.path(), |_| {});
    c.start("/skel-api", "scenario:two_person_punch");
    c.wait_idle("/skel-api", T);
    let before = c.get("/skel-api/alerts").1;
    assert!(before["total"].as_u64().unwrap() >= 1);
    srv.stop().unwrap();

    let (_srv, c) = server_at(dir.path(), |_| {});
    let after = c.get("/skel-api/alerts").1;
    assert_eq!(after, before);
    let id = after["items"][0]["alert_id"].as_str().unwrap();
    assert_eq!(c.get_bytes(&format!("/skel-api/alerts/{id}/clip")).0, 200);
    let stats = c.get("/skel-api/stats").1;
    assert!(stats["session"]["stopped_at"].is_string(), "last session reloaded: {stats}");
}

#[test]
fn bad_sources_are_rejected() {
    let (_dir, _srv, c) = server(|_| {});
    for (prefix, src) in [
        ("/skel-api", "/no/such/file.jsonl"),
        ("/skel-api", "scenario:not_a_scenario"),
        ("/skel-api", "rtsp://10.0.0.1/stream"),
        ("/api", "camera:0"),
        ("/api", "  "),
    ] {
        let (s, v) = c.start(prefix, src);
        assert_eq!((s, code(&v)), (400, "BAD_SOURCE"), "{prefix} {src}: {v}");
    }
    let (s, v) = c.post("/skel-api/stream/start", &json!({"src": "x"}));
    assert_eq!((s, code(&v)), (400, "BAD_REQUEST"));
    assert_eq!(c.get("/skel-api/stats").1["running"], false);
}

#[test]
fn upload_round_trip_and_rejections() {
    let (dir, _srv, c) = server(|_| {});
    let fixture = dir.path().join("fixture.jsonl");
    write_replay(&fixture, &scenario::generate(scenario::Scenario::Fall, 3)).unwrap();
    let data = std::fs::read(&fixture).unwrap();

    let (s, receipt) = c.upload("/skel-api", "fall.jsonl", &data);
    assert_eq!(s, 200, "{receipt}");
    assert_eq!(receipt["frames"], 300);
    let stored = std::path::PathBuf::from(receipt["source"].as_str().unwrap());
    assert!(stored.starts_with(std::fs::canonicalize(dir.path().join("recordings")).unwrap()));
    assert_eq!(std::fs::read(&stored).unwrap(), data);

    let (s, session) = c.start("/skel-api", receipt["source"].as_str().unwrap());
    assert_eq!(s, 200, "{session}");
    let stats = c.wait_idle("/skel-api", T);
    assert_eq!(stats["metrics"]["frames_in"], 300);
    // relative names resolve under recordings/
    let name = stored.file_name().unwrap().to_str().unwrap();
    assert_eq!(c.start("/skel-api", name).0, 200);
    c.wait_idle("/skel-api", T);

    // identical route on the other prefix
    assert_eq!(c.upload("/api", "fall.jsonl", &data).0, 200);

    let text = String::from_utf8(data.clone()).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    let cut = &lines[4][..lines[4].len() / 2];
    lines[4] = cut;
    let (s, v) = c.upload("/skel-api", "truncated.jsonl", lines.join("\n").as_bytes());
    assert_eq!((s, code(&v)), (422, "MALFORMED_REPLAY"), "{v}");
    assert_eq!(v["line"], 5);

    let mut mp4 = vec![0, 0, 0, 0x18];
    mp4.extend_from_slice(b"ftypmp42");
    mp4.resize(64, 0);
    let (s, v) = c.upload("/skel-api", "clip.mp4", &mp4);
    assert_eq!((s, code(&v)), (415, "UNSUPPORTED_FORMAT"));
    let (s, v) = c.upload("/api", "renamed.jsonl", &mp4);
    assert_eq!((s, code(&v)), (415, "UNSUPPORTED_FORMAT"));
    let (s, v) = c.upload("/skel-api", "blob.bin", &[0xff, 0xfe, 0x00, 0x81]);
    assert_eq!((s, code(&v)), (415, "UNSUPPORTED_FORMAT"));
}

#[test]
fn upload_size_limit_applies() {
    let (dir, srv, c) = server(|cfg| cfg.service.max_upload_mb = 1);
    let big = vec![b'a'; 2 << 20];
    // the server may close the connection before the client finishes sending
    if let Ok((s, v)) = c.try_upload("/skel-api", "big.jsonl", &big) {
        assert_eq!(s, 413, "{v}");
    }
    assert_eq!(std::fs::read_dir(dir.path().join("recordings")).unwrap().count(), 0);
    assert_eq!(Client::new(srv.base_url()).get("/healthz").0, 200);
}

#[test]
fn health() {
    let (_dir, srv, _) = server(|_| {});
    let c = Client::new(srv.base_url());
    assert_eq!(c.get("/healthz").0, 200);
}
