//! Scriptable HTTP mock used to stand in for inference servers (tensor
//! `/v1/infer` and chat-style `/v1/chat/completions`) in tests and demos.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use parking_lot::Mutex;

#[derive(Debug, Clone)]
pub struct MockRequest {
    pub method: String,
    pub path: String,
    pub body: Vec<u8>,
}

impl MockRequest {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body).unwrap_or(serde_json::Value::Null)
    }
}

#[derive(Debug, Clone)]
pub struct MockResponse {
    pub status: u16,
    pub body: Vec<u8>,
    pub delay_ms: u64,
}

impl MockResponse {
    pub fn json<T: serde::Serialize>(value: &T) -> Self {
        MockResponse { status: 200, body: serde_json::to_vec(value).unwrap(), delay_ms: 0 }
    }

    pub fn status(status: u16) -> Self {
        MockResponse { status, body: Vec::new(), delay_ms: 0 }
    }

    pub fn delayed(mut self, ms: u64) -> Self {
        self.delay_ms = ms;
        self
    }

    /// OpenAI-style chat completion wrapping `content`.
    pub fn chat(content: &str) -> Self {
        Self::json(&serde_json::json!({
            "id": "mock",
            "object": "chat.completion",
            "choices": [{
                "index": 0,
                "message": {"role": "assistant", "content": content},
                "finish_reason": "stop"
            }]
        }))
    }
}

type Handler = dyn Fn(&MockRequest) -> MockResponse + Send + Sync;

pub struct MockServer {
    addr: std::net::SocketAddr,
    requests: Arc<Mutex<Vec<MockRequest>>>,
    stop: Arc<AtomicBool>,
    server: Arc<tiny_http::Server>,
    threads: Vec<JoinHandle<()>>,
}

impl MockServer {
    /// Binds an ephemeral localhost port. Requests are served concurrently
    /// (4 worker threads) so delayed responses do not serialize callers.
    pub fn start(handler: impl Fn(&MockRequest) -> MockResponse + Send + Sync + 'static) -> Self {
        let server = Arc::new(tiny_http::Server::http("127.0.0.1:0").expect("bind mock server"));
        let addr = server.server_addr().to_ip().expect("tcp listener");
        let requests = Arc::new(Mutex::new(Vec::new()));
        let stop = Arc::new(AtomicBool::new(false));
        let handler: Arc<Handler> = Arc::new(handler);
        let threads = (0..4)
            .map(|_| {
                let server = server.clone();
                let requests = requests.clone();
                let stop = stop.clone();
                let handler = handler.clone();
                std::thread::spawn(move || {
                    while !stop.load(Ordering::Relaxed) {
                        let mut req = match server.recv_timeout(Duration::from_millis(50)) {
                            Ok(Some(r)) => r,
                            Ok(None) => continue,
                            Err(_) => break,
                        };
                        let mut body = Vec::new();
                        let _ = req.as_reader().read_to_end(&mut body);
                        let mreq = MockRequest {
                            method: req.method().to_string(),
                            path: req.url().to_string(),
                            body,
                        };
                        requests.lock().push(mreq.clone());
                        let resp = handler(&mreq);
                        if resp.delay_ms > 0 {
                            std::thread::sleep(Duration::from_millis(resp.delay_ms));
                        }
                        let header = tiny_http::Header::from_bytes(
                            &b"Content-Type"[..],
                            &b"application/json"[..],
                        )
                        .unwrap();
                        let _ = req.respond(
                            tiny_http::Response::from_data(resp.body)
                                .with_status_code(resp.status)
                                .with_header(header),
                        );
                    }
                })
            })
            .collect();
        MockServer { addr, requests, stop, server, threads }
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn requests(&self) -> Vec<MockRequest> {
        self.requests.lock().clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::Relaxed);
        self.server.unblock();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}
