//! Layered settings for both backends and the service: built-in defaults,
//! then a TOML file with `[skel]`, `[vlm]` and `[service]` tables, then
//! `SKEL_*`, `VLM_*` and `EDGEGUARD_*` environment variables.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::LifterKind;
use crate::runtime::PipelineConfig;
use crate::vlm::VlmConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceSettings {
    pub storage_root: PathBuf,
    pub bind: String,
    pub max_upload_mb: u64,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        ServiceSettings { storage_root: PathBuf::from("data"), bind: "127.0.0.1:8080".into(), max_upload_mb: 256 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AppConfig {
    pub skel: PipelineConfig,
    pub vlm: VlmConfig,
    pub service: ServiceSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Section {
    Skel,
    Vlm,
    Service,
}

impl Section {
    pub fn table(self) -> &'static str {
        match self {
            Section::Skel => "skel",
            Section::Vlm => "vlm",
            Section::Service => "service",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Default,
    File,
    Env,
}

pub struct Knob {
    pub section: Section,
    pub key: &'static str,
    pub env: &'static str,
    pub help: &'static str,
    set: fn(&mut AppConfig, &str) -> Result<()>,
    get: fn(&AppConfig) -> String,
}

impl std::fmt::Debug for Knob {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Knob").field("env", &self.env).finish_non_exhaustive()
    }
}

impl Knob {
    pub fn set(&self, cfg: &mut AppConfig, raw: &str) -> Result<()> {
        (self.set)(cfg, raw.trim()).map_err(|e| Error::Config(format!("{}: {e}", self.env)))
    }

    pub fn get(&self, cfg: &AppConfig) -> String {
        (self.get)(cfg)
    }
}

fn parse<T: FromStr>(raw: &str) -> Result<T>
where
    T::Err: Display,
{
    raw.parse::<T>().map_err(|e| Error::Config(format!("cannot parse {raw:?}: {e}")))
}

fn parse_bool(raw: &str) -> Result<bool> {
    match raw.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("cannot parse {raw:?} as a boolean"))),
    }
}

fn parse_list(raw: &str) -> Result<Vec<String>> {
    Ok(raw.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_string).collect())
}

fn parse_lifter(raw: &str) -> Result<LifterKind> {
    serde_json::from_value(serde_json::Value::String(raw.to_ascii_lowercase().replace('-', "_")))
        .map_err(|_| Error::Config(format!("unknown lifter {raw:?} (pseudo3d|external)")))
}

fn show<T: Display>(v: &T) -> String {
    v.to_string()
}

fn show_enum<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}

macro_rules! knob {
    ($section:ident, $env:literal, $key:literal, $help:literal, |$c:ident| $field:expr, $parse:expr, $show:expr) => {
        Knob {
            section: Section::$section,
            key: $key,
            env: $env,
            help: $help,
            set: |$c: &mut AppConfig, raw: &str| {
                $field = $parse(raw)?;
                Ok(())
            },
            get: |$c: &AppConfig| $show(&$field),
        }
    };
    ($section:ident, $env:literal, $key:literal, $help:literal, |$c:ident| $field:expr) => {
        knob!($section, $env, $key, $help, |$c| $field, parse, show)
    };
}

pub fn knobs() -> &'static [Knob] {
    static KNOBS: std::sync::OnceLock<Vec<Knob>> = std::sync::OnceLock::new();
    KNOBS.get_or_init(|| {
        vec![
            knob!(Skel, "SKEL_CLIP_LEN", "clip_len", "frames per clip window", |c| c.skel.assembly.clip_len),
            knob!(Skel, "SKEL_CLIP_STRIDE", "clip_stride", "frames between clip emissions", |c| c.skel.assembly.clip_stride),
            knob!(Skel, "SKEL_PAIR_DISTANCE", "pair_distance", "pair gating distance in px, 0 disables", |c| c.skel.assembly.pair_distance),
            knob!(Skel, "SKEL_MAX_PERSONS", "max_persons", "detections kept per frame", |c| c.skel.assembly.max_persons),
            knob!(Skel, "SKEL_LOSS_HORIZON", "loss_horizon", "frames a clip buffer survives without its track", |c| c.skel.assembly.loss_horizon),
            knob!(Skel, "SKEL_CENTROID_CONF", "centroid_conf", "keypoint confidence used for centroids", |c| c.skel.assembly.centroid_conf),
            knob!(Skel, "SKEL_YOLO_CONFIDENCE", "yolo_confidence", "detection score floor", |c| c.skel.tracker.det_conf_floor),
            knob!(Skel, "SKEL_IOU", "iou", "detector-side NMS overlap threshold", |c| c.skel.tracker.nms_iou),
            knob!(Skel, "SKEL_HIGH_SCORE_THRESH", "high_score_thresh", "first-stage association score", |c| c.skel.tracker.high_score_thresh),
            knob!(Skel, "SKEL_MATCH_IOU_HIGH", "match_iou_high", "minimum IoU for first-stage matches", |c| c.skel.tracker.match_iou_min_high),
            knob!(Skel, "SKEL_MATCH_IOU_LOW", "match_iou_low", "minimum IoU for second-stage matches", |c| c.skel.tracker.match_iou_min_low),
            knob!(Skel, "SKEL_LOST_RETENTION_FRAMES", "lost_retention_frames", "frames a lost track keeps its id", |c| c.skel.tracker.lost_retention_frames),
            knob!(Skel, "SKEL_DANGER_THRESHOLD", "danger_threshold", "danger-class mass for DANGER", |c| c.skel.risk.danger_threshold),
            knob!(Skel, "SKEL_WARNING_THRESHOLD", "warning_threshold", "warning-class mass for WARNING", |c| c.skel.risk.warning_threshold),
            knob!(Skel, "SKEL_CLASSIFIER", "classifier", "mock | external", |c| c.skel.classifier, parse, show_enum),
            knob!(Skel, "SKEL_BACKBONE", "backbone", "model name sent to the classifier", |c| c.skel.backbone, parse, show_enum),
            knob!(Skel, "SKEL_CLASSIFIER_URL", "classifier_url", "external classifier base URL", |c| c.skel.classifier_url),
            knob!(Skel, "SKEL_LIFTER", "lifter", "pseudo3d | external", |c| c.skel.lifter, parse_lifter, show_enum),
            knob!(Skel, "SKEL_LIFTER_URL", "lifter_url", "external lifter base URL", |c| c.skel.lifter_url),
            knob!(Skel, "SKEL_LIFTER_MODEL", "lifter_model", "model name sent to the lifter", |c| c.skel.lifter_model),
            knob!(Skel, "SKEL_REQUEST_TIMEOUT_MS", "request_timeout_ms", "external backend timeout", |c| c.skel.request_timeout_ms),
            knob!(Skel, "SKEL_ANALYSIS_QUEUE", "analysis_queue", "frame queue capacity", |c| c.skel.analysis_queue),
            knob!(Skel, "SKEL_CLASSIFY_QUEUE", "classify_queue", "clip batch queue capacity", |c| c.skel.classify_queue),
            knob!(Skel, "SKEL_BROADCAST_QUEUE", "broadcast_queue", "overlay queue capacity", |c| c.skel.broadcast_queue),
            knob!(Skel, "SKEL_DROP_POLICY", "drop_policy", "auto | backpressure | drop_oldest", |c| c.skel.drop_policy, parse, show_enum),
            knob!(Skel, "SKEL_WORKERS", "workers", "classifier worker threads", |c| c.skel.workers),
            knob!(Skel, "SKEL_PACED", "paced", "replay at source timestamps", |c| c.skel.paced, parse_bool, |v: &bool| v.to_string()),
            knob!(Skel, "SKEL_NOMINAL_FPS", "nominal_fps", "source frame rate", |c| c.skel.nominal_fps),
            knob!(Skel, "SKEL_OVERLAY", "overlay", "render overlay frames", |c| c.skel.overlay, parse_bool, |v: &bool| v.to_string()),
            knob!(Skel, "SKEL_CANVAS_WIDTH", "canvas_width", "overlay width for pose-only sources", |c| c.skel.canvas_width),
            knob!(Skel, "SKEL_CANVAS_HEIGHT", "canvas_height", "overlay height for pose-only sources", |c| c.skel.canvas_height),
            knob!(Skel, "SKEL_ALERT_PRE_SEC", "alert_pre_sec", "clip seconds before the event", |c| c.skel.alert_pre_sec),
            knob!(Skel, "SKEL_ALERT_POST_SEC", "alert_post_sec", "clip seconds after the event", |c| c.skel.alert_post_sec),
            knob!(Skel, "SKEL_ALERT_COOLDOWN_SEC", "alert_cooldown_sec", "per track set alert cooldown", |c| c.skel.alert_cooldown_sec),
            knob!(Skel, "SKEL_RING_CAPACITY_SEC", "ring_capacity_sec", "overlay ring buffer length", |c| c.skel.ring_capacity_sec),
            knob!(Vlm, "VLM_MODEL", "model", "model name sent to the chat server", |c| c.vlm.model),
            knob!(Vlm, "VLM_CHUNK_DURATION_SEC", "chunk_duration_sec", "action window and cadence", |c| c.vlm.chunk_duration_sec),
            knob!(Vlm, "VLM_RECENT_FPS", "recent_fps", "action stream rate", |c| c.vlm.recent_fps),
            knob!(Vlm, "VLM_HISTORY_MAX_SEC", "history_max_sec", "context stream span", |c| c.vlm.history_max_sec),
            knob!(Vlm, "VLM_HISTORY_FPS", "history_fps", "context stream rate", |c| c.vlm.history_fps),
            knob!(Vlm, "VLM_TARGET_MAX_DIM", "target_max_dim", "long side after resize", |c| c.vlm.target_max_dim),
            knob!(Vlm, "VLM_MIN_DIM", "min_dim", "short side floor after resize", |c| c.vlm.min_dim),
            knob!(Vlm, "VLM_MAX_TOKENS", "max_tokens", "generation limit", |c| c.vlm.max_tokens),
            knob!(Vlm, "VLM_TEMPERATURE", "temperature", "sampling temperature", |c| c.vlm.temperature),
            knob!(Vlm, "VLM_TOP_P", "top_p", "nucleus sampling", |c| c.vlm.top_p),
            knob!(Vlm, "VLM_DUAL_SERVER_MODE", "dual_server_mode", "alternate chunks over two endpoints", |c| c.vlm.dual_server_mode, parse_bool, |v: &bool| v.to_string()),
            knob!(Vlm, "VLM_ENDPOINTS", "endpoints", "comma-separated chat server base URLs", |c| c.vlm.endpoints, parse_list, |v: &Vec<String>| v.join(",")),
            knob!(Vlm, "VLM_MEMORY_LOOP", "memory_loop", "feed the previous summary back", |c| c.vlm.memory_loop, parse_bool, |v: &bool| v.to_string()),
            knob!(Vlm, "VLM_SCENE_PROFILE", "scene_profile", "indoor | outdoor_intersection | outdoor_park | generic", |c| c.vlm.scene_profile, parse, show_enum),
            knob!(Vlm, "VLM_CONTEXT_DISJOINT", "context_disjoint", "context excludes the action window", |c| c.vlm.context_disjoint, parse_bool, |v: &bool| v.to_string()),
            knob!(Vlm, "VLM_REQUEST_TIMEOUT_MS", "request_timeout_ms", "chat request timeout", |c| c.vlm.request_timeout_ms),
            knob!(Vlm, "VLM_PACED", "paced", "replay at source timestamps", |c| c.vlm.paced, parse_bool, |v: &bool| v.to_string()),
            knob!(Vlm, "VLM_CANVAS_WIDTH", "canvas_width", "render width for pose-only sources", |c| c.vlm.canvas_width),
            knob!(Vlm, "VLM_CANVAS_HEIGHT", "canvas_height", "render height for pose-only sources", |c| c.vlm.canvas_height),
            knob!(Vlm, "VLM_JPEG_QUALITY", "jpeg_quality", "JPEG quality of sent frames", |c| c.vlm.jpeg_quality),
            knob!(Service, "EDGEGUARD_STORAGE_ROOT", "storage_root", "recordings, alerts and overlays live here", |c| c.service.storage_root, |r: &str| Ok::<_, Error>(PathBuf::from(r)), |v: &PathBuf| v.display().to_string()),
            knob!(Service, "EDGEGUARD_BIND", "bind", "listen address", |c| c.service.bind),
            knob!(Service, "EDGEGUARD_MAX_UPLOAD_MB", "max_upload_mb", "upload size limit", |c| c.service.max_upload_mb),
        ]
    })
}

pub fn knob_by_env(env: &str) -> Option<&'static Knob> {
    knobs().iter().find(|k| k.env == env)
}

/// A loaded configuration plus where each knob's value came from.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: AppConfig,
    pub origins: BTreeMap<&'static str, Origin>,
}

impl Loaded {
    /// `(env name, value, origin)` for every knob, in registry order.
    pub fn describe(&self) -> Vec<(&'static str, String, Origin)> {
        knobs().iter().map(|k| (k.env, k.get(&self.config), self.origins.get(k.env).copied().unwrap_or(Origin::Default))).collect()
    }
}

fn toml_scalar(v: &toml::Value) -> Result<String> {
    Ok(match v {
        toml::Value::String(s) => s.clone(),
        toml::Value::Integer(i) => i.to_string(),
        toml::Value::Float(f) => f.to_string(),
        toml::Value::Boolean(b) => b.to_string(),
        toml::Value::Array(a) => a.iter().map(toml_scalar).collect::<Result<Vec<_>>>()?.join(","),
        other => return Err(Error::Config(format!("unsupported value {other}"))),
    })
}

pub fn apply_toml(cfg: &mut AppConfig, text: &str, origins: &mut BTreeMap<&'static str, Origin>) -> Result<()> {
    let doc: toml::Table = text.parse().map_err(|e| Error::Config(format!("config file: {e}")))?;
    for (table, value) in &doc {
        let section = [Section::Skel, Section::Vlm, Section::Service]
            .into_iter()
            .find(|s| s.table() == table)
            .ok_or_else(|| Error::Config(format!("unknown config table [{table}]")))?;
        let entries = value.as_table().ok_or_else(|| Error::Config(format!("[{table}] must be a table")))?;
        for (key, v) in entries {
            let knob = knobs()
                .iter()
                .find(|k| k.section == section && k.key == key)
                .ok_or_else(|| Error::Config(format!("unknown key {table}.{key}")))?;
            knob.set(cfg, &toml_scalar(v)?)?;
            origins.insert(knob.env, Origin::File);
        }
    }
    Ok(())
}

/// Defaults, then `file` if given, then every registered variable that
/// `env` returns. Validates the result.
pub fn load(file: Option<&Path>, env: impl Fn(&str) -> Option<String>) -> Result<Loaded> {
    let mut config = AppConfig::default();
    let mut origins = BTreeMap::new();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        apply_toml(&mut config, &text, &mut origins)?;
    }
    for k in knobs() {
        if let Some(raw) = env(k.env) {
            k.set(&mut config, &raw)?;
            origins.insert(k.env, Origin::Env);
        }
    }
    config.skel.validate()?;
    config.vlm.validate()?;
    Ok(Loaded { config, origins })
}

pub fn load_from_process(file: Option<&Path>) -> Result<Loaded> {
    load(file, |k| std::env::var(k).ok())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env_of(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let map: BTreeMap<String, String> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        move |k| map.get(k).cloned()
    }

    #[test]
    fn defaults_round_trip_through_every_knob() {
        let d = AppConfig::default();
        for k in knobs() {
            let mut c = AppConfig::default();
            k.set(&mut c, &k.get(&d)).unwrap_or_else(|e| panic!("{}: {e}", k.env));
            assert_eq!(c, d, "{}", k.env);
        }
    }

    #[test]
    fn env_names_are_unique_and_prefixed() {
        let mut seen = std::collections::BTreeSet::new();
        for k in knobs() {
            assert!(seen.insert(k.env), "duplicate {}", k.env);
            let prefix = match k.section {
                Section::Skel => "SKEL_",
                Section::Vlm => "VLM_",
                Section::Service => "EDGEGUARD_",
            };
            assert!(k.env.starts_with(prefix));
            assert_eq!(k.env[prefix.len()..].to_ascii_lowercase(), k.key, "{}", k.env);
        }
    }

    #[test]
    fn precedence_env_over_file_over_default() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[skel]\nclip_stride = 20\nclip_len = 90\n[vlm]\nscene_profile = \"outdoor_park\"\n").unwrap();
        let l = load(Some(&path), env_of(&[("SKEL_CLIP_STRIDE", "15")])).unwrap();
        assert_eq!(l.config.skel.assembly.clip_stride, 15);
        assert_eq!(l.config.skel.assembly.clip_len, 90);
        assert_eq!(l.config.skel.assembly.max_persons, 100);
        assert_eq!(l.config.vlm.scene_profile, crate::vlm::SceneProfile::OutdoorPark);
        assert_eq!(l.origins["SKEL_CLIP_STRIDE"], Origin::Env);
        assert_eq!(l.origins["SKEL_CLIP_LEN"], Origin::File);
        assert!(!l.origins.contains_key("SKEL_MAX_PERSONS"));
    }

    #[test]
    fn bad_inputs_are_reported() {
        assert!(load(None, env_of(&[("SKEL_CLIP_LEN", "ten")])).is_err());
        let mut c = AppConfig::default();
        let mut o = BTreeMap::new();
        assert!(apply_toml(&mut c, "[skel]\nbogus = 1\n", &mut o).is_err());
        assert!(apply_toml(&mut c, "[other]\nx = 1\n", &mut o).is_err());
        let err = load(None, env_of(&[("VLM_DUAL_SERVER_MODE", "true")])).unwrap_err();
        assert!(err.to_string().contains("endpoint"));
        let l = load(None, env_of(&[("VLM_DUAL_SERVER_MODE", "on"), ("VLM_ENDPOINTS", "http://a, http://b")])).unwrap();
        assert_eq!(l.config.vlm.endpoints, ["http://a", "http://b"]);
    }
}
