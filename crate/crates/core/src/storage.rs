//! Storage hierarchy and the alert/session store. The file-backed store
//! keeps an append-only JSONL log per kind and an in-memory index.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::risk::RiskLevel;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StorageLayout {
    pub root: PathBuf,
}

impl StorageLayout {
    /// Creates `root` and its `recordings/`, `alerts/` and `overlays/`.
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let layout = StorageLayout { root: root.into() };
        for d in [layout.recordings(), layout.alerts(), layout.overlays()] {
            std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        Ok(layout)
    }

    pub fn recordings(&self) -> PathBuf {
        self.root.join("recordings")
    }

    pub fn alerts(&self) -> PathBuf {
        self.root.join("alerts")
    }

    pub fn overlays(&self) -> PathBuf {
        self.root.join("overlays")
    }

    pub fn alerts_for(&self, backend: Backend) -> PathBuf {
        self.alerts().join(backend.dir_name())
    }

    pub fn alert_log(&self) -> PathBuf {
        self.root.join("alerts.jsonl")
    }

    pub fn session_log(&self) -> PathBuf {
        self.root.join("sessions.jsonl")
    }

    pub fn is_alert_artifact(&self, p: &Path) -> bool {
        p.starts_with(self.alerts())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Backend {
    Skeleton,
    Vlm,
}

impl Backend {
    pub const ALL: [Backend; 2] = [Backend::Skeleton, Backend::Vlm];

    pub fn dir_name(self) -> &'static str {
        match self {
            Backend::Skeleton => "skel",
            Backend::Vlm => "vlm",
        }
    }
}

impl std::fmt::Display for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Backend::Skeleton => "SKELETON",
            Backend::Vlm => "VLM",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub backend: Backend,
    pub source: String,
    pub started_at: DateTime<Utc>,
    pub stopped_at: Option<DateTime<Utc>>,
    /// Final report once the session has ended.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<serde_json::Value>,
}

impl SessionRecord {
    pub fn start(backend: Backend, source: impl Into<String>) -> Self {
        SessionRecord {
            session_id: uuid::Uuid::new_v4().to_string(),
            backend,
            source: source.into(),
            started_at: Utc::now(),
            stopped_at: None,
            report: None,
        }
    }

    pub fn is_running(&self) -> bool {
        self.stopped_at.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertRecord {
    pub alert_id: String,
    pub session_id: String,
    pub created_at: DateTime<Utc>,
    pub level: RiskLevel,
    pub summary: String,
    pub clip_path: PathBuf,
    pub thumbnail_path: PathBuf,
    pub backend: Backend,
    pub frame_span: (u64, u64),
    pub event_ts_ms: i64,
    /// Class masses and track ids, or the verdict parse mode.
    #[serde(default)]
    pub extra: serde_json::Value,
}

impl AlertRecord {
    pub fn validate(&self) -> Result<()> {
        if self.level == RiskLevel::Safe {
            return Err(Error::Config("SAFE is never stored as an alert".into()));
        }
        for p in [&self.clip_path, &self.thumbnail_path] {
            if !p.is_file() {
                return Err(Error::BadSource(format!("alert artifact missing: {}", p.display())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlertQuery {
    pub limit: Option<usize>,
    pub offset: usize,
    pub level: Option<RiskLevel>,
    pub backend: Option<Backend>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertPage {
    pub total: usize,
    pub offset: usize,
    pub items: Vec<AlertRecord>,
}

pub const DEFAULT_PAGE: usize = 50;

pub trait AlertStore: Send + Sync {
    fn insert_alert(&self, alert: AlertRecord) -> Result<()>;
    fn list_alerts(&self, q: &AlertQuery) -> AlertPage;
    fn get_alert(&self, id: &str) -> Option<AlertRecord>;
    fn put_session(&self, s: &SessionRecord) -> Result<()>;
    fn sessions(&self) -> Vec<SessionRecord>;
}

/// Newest first; equal timestamps break by id, descending.
fn order_key(a: &AlertRecord) -> (std::cmp::Reverse<DateTime<Utc>>, std::cmp::Reverse<String>) {
    (std::cmp::Reverse(a.created_at), std::cmp::Reverse(a.alert_id.clone()))
}

pub fn page(alerts: &[AlertRecord], q: &AlertQuery) -> AlertPage {
    let mut hits: Vec<&AlertRecord> = alerts
        .iter()
        .filter(|a| q.level.is_none_or(|l| a.level == l))
        .filter(|a| q.backend.is_none_or(|b| a.backend == b))
        .collect();
    hits.sort_by_cached_key(|a| order_key(a));
    let total = hits.len();
    let items = hits.into_iter().skip(q.offset).take(q.limit.unwrap_or(DEFAULT_PAGE)).cloned().collect();
    AlertPage { total, offset: q.offset, items }
}

#[derive(Default)]
struct Index {
    alerts: Vec<AlertRecord>,
    by_id: BTreeMap<String, usize>,
    sessions: BTreeMap<String, SessionRecord>,
}

pub struct FileAlertStore {
    layout: StorageLayout,
    index: RwLock<Index>,
    writer: Mutex<()>,
}

impl std::fmt::Debug for FileAlertStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FileAlertStore").field("root", &self.layout.root).finish_non_exhaustive()
    }
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(v) => out.push(v),
            // a torn final write is skipped
            Err(e) => tracing::warn!("{}:{}: skipping unreadable record: {e}", path.display(), i + 1),
        }
    }
    Ok(out)
}

fn append_jsonl<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut line = serde_json::to_vec(v)?;
    line.push(b'\n');
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&line).and_then(|_| f.sync_data()).map_err(|e| Error::io(path, e))
}

impl FileAlertStore {
    pub fn open(layout: StorageLayout) -> Result<Self> {
        let mut index = Index::default();
        for a in read_jsonl::<AlertRecord>(&layout.alert_log())? {
            if !index.by_id.contains_key(&a.alert_id) {
                index.by_id.insert(a.alert_id.clone(), index.alerts.len());
                index.alerts.push(a);
            }
        }
        for s in read_jsonl::<SessionRecord>(&layout.session_log())? {
            index.sessions.insert(s.session_id.clone(), s);
        }
        Ok(FileAlertStore { layout, index: RwLock::new(index), writer: Mutex::new(()) })
    }

    pub fn layout(&self) -> &StorageLayout {
        &self.layout
    }
}

impl AlertStore for FileAlertStore {
    fn insert_alert(&self, alert: AlertRecord) -> Result<()> {
        alert.validate()?;
        let _w = self.writer.lock();
        if self.index.read().by_id.contains_key(&alert.alert_id) {
            return Err(Error::Config(format!("duplicate alert id {}", alert.alert_id)));
        }
        append_jsonl(&self.layout.alert_log(), &alert)?;
        let mut idx = self.index.write();
        let n = idx.alerts.len();
        idx.by_id.insert(alert.alert_id.clone(), n);
        idx.alerts.push(alert);
        Ok(())
    }

    fn list_alerts(&self, q: &AlertQuery) -> AlertPage {
        page(&self.index.read().alerts, q)
    }

    fn get_alert(&self, id: &str) -> Option<AlertRecord> {
        let idx = self.index.read();
        idx.by_id.get(id).map(|&i| idx.alerts[i].clone())
    }

    fn put_session(&self, s: &SessionRecord) -> Result<()> {
        if let Some(stop) = s.stopped_at {
            if stop < s.started_at {
                return Err(Error::Config("session stopped before it started".into()));
            }
        }
        let _w = self.writer.lock();
        append_jsonl(&self.layout.session_log(), s)?;
        self.index.write().sessions.insert(s.session_id.clone(), s.clone());
        Ok(())
    }

    fn sessions(&self) -> Vec<SessionRecord> {
        let mut v: Vec<SessionRecord> = self.index.read().sessions.values().cloned().collect();
        v.sort_by(|a, b| b.started_at.cmp(&a.started_at).then_with(|| b.session_id.cmp(&a.session_id)));
        v
    }
}
