#![allow(dead_code)]

use std::path::Path;
use std::time::{Duration, Instant};

use edgeguard_core::config::AppConfig;
use edgeguard_service::{spawn_server, ServerHandle, Service};
use serde_json::Value;

pub struct Client {
    base: String,
    agent: ureq::Agent,
}

impl Client {
    pub fn new(base: String) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        Client { base, agent }
    }

    fn json_of(mut resp: ureq::http::Response<ureq::Body>) -> (u16, Value) {
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().unwrap();
        (status, serde_json::from_str(&body).unwrap_or(Value::String(body)))
    }

    pub fn get(&self, path: &str) -> (u16, Value) {
        Self::json_of(self.agent.get(format!("{}{path}", self.base)).call().unwrap())
    }

    pub fn get_bytes(&self, path: &str) -> (u16, Vec<u8>) {
        let mut resp = self.agent.get(format!("{}{path}", self.base)).call().unwrap();
        let status = resp.status().as_u16();
        (status, resp.body_mut().with_config().limit(1 << 30).read_to_vec().unwrap())
    }

    pub fn post(&self, path: &str, body: &Value) -> (u16, Value) {
        Self::json_of(self.agent.post(format!("{}{path}", self.base)).send_json(body).unwrap())
    }

    pub fn post_empty(&self, path: &str) -> (u16, Value) {
        Self::json_of(self.agent.post(format!("{}{path}", self.base)).send_empty().unwrap())
    }

    pub fn start(&self, prefix: &str, source: &str) -> (u16, Value) {
        self.post(&format!("{prefix}/stream/start"), &serde_json::json!({ "source": source }))
    }

    pub fn upload(&self, prefix: &str, file_name: &str, data: &[u8]) -> (u16, Value) {
        self.try_upload(prefix, file_name, data).unwrap()
    }

    pub fn try_upload(&self, prefix: &str, file_name: &str, data: &[u8]) -> Result<(u16, Value), ureq::Error> {
        let boundary = "edgeguard-test-boundary-7f3a";
        let mut body = Vec::new();
        body.extend_from_slice(
            format!(
                "--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"{file_name}\"\r\nContent-Type: application/octet-stream\r\n\r\n"
            )
            .as_bytes(),
        );
        body.extend_from_slice(data);
        body.extend_from_slice(format!("\r\n--{boundary}--\r\n").as_bytes());
        let resp = self
            .agent
            .post(format!("{}{prefix}/upload", self.base))
            .header("content-type", format!("multipart/form-data; boundary={boundary}"))
            .send(&body[..])?;
        Ok(Self::json_of(resp))
    }

    /// Polls stats until the backend reports no running session.
    pub fn wait_idle(&self, prefix: &str, timeout: Duration) -> Value {
        let deadline = Instant::now() + timeout;
        loop {
            let (_, stats) = self.get(&format!("{prefix}/stats"));
            if stats["running"] == false {
                return stats;
            }
            assert!(Instant::now() < deadline, "session still running after {timeout:?}");
            std::thread::sleep(Duration::from_millis(25));
        }
    }
}

pub fn config_at(root: &Path, tweak: impl FnOnce(&mut AppConfig)) -> AppConfig {
    let mut cfg = AppConfig::default();
    cfg.service.storage_root = root.to_path_buf();
    cfg.skel.paced = false;
    cfg.vlm.paced = false;
    cfg.vlm.canvas_width = 320;
    cfg.vlm.canvas_height = 180;
    tweak(&mut cfg);
    cfg
}

pub fn server_at(root: &Path, tweak: impl FnOnce(&mut AppConfig)) -> (ServerHandle, Client) {
    let service = Service::open(config_at(root, tweak)).unwrap();
    let server = spawn_server(service, "127.0.0.1:0").unwrap();
    let client = Client::new(server.base_url());
    (server, client)
}

pub fn server(tweak: impl FnOnce(&mut AppConfig)) -> (tempfile::TempDir, ServerHandle, Client) {
    let dir = tempfile::tempdir().unwrap();
    let (server, client) = server_at(dir.path(), tweak);
    (dir, server, client)
}
