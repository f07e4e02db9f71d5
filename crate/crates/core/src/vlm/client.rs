use std::time::Duration;

use serde_json::Value;

use super::prompt::PromptPayload;
use super::verdict::{parse_verdict, VlmVerdict};
use super::VlmConfig;
use crate::error::{Error, Result};

/// Chat-completions client over the configured endpoints.
#[derive(Clone)]
pub struct ChatClient {
    endpoints: Vec<String>,
    agent: ureq::Agent,
}

impl std::fmt::Debug for ChatClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChatClient").field("endpoints", &self.endpoints).finish_non_exhaustive()
    }
}

impl ChatClient {
    pub fn new(cfg: &VlmConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.request_timeout_ms)))
            .build()
            .into();
        let endpoints = cfg.endpoints.iter().map(|e| e.trim_end_matches('/').to_string()).collect();
        ChatClient { endpoints, agent }
    }

    pub fn endpoints(&self) -> &[String] {
        &self.endpoints
    }

    /// Posts `body` and returns the first choice's message content.
    pub fn complete(&self, endpoint: usize, body: &Value) -> Result<String> {
        let base = self
            .endpoints
            .get(endpoint)
            .ok_or_else(|| Error::Config(format!("no endpoint #{endpoint}")))?;
        let url = format!("{base}/v1/chat/completions");
        let mut resp = self.agent.post(&url).send_json(body).map_err(|e| Error::Inference(format!("{url}: {e}")))?;
        let v: Value = resp.body_mut().read_json().map_err(|e| Error::Protocol(format!("{url}: {e}")))?;
        let content = &v["choices"][0]["message"]["content"];
        match content {
            Value::String(s) => Ok(s.clone()),
            Value::Array(parts) => Ok(parts.iter().filter_map(|p| p["text"].as_str()).collect::<Vec<_>>().join("")),
            _ => Err(Error::Protocol(format!("{url}: response has no choices[0].message.content"))),
        }
    }
}

/// Sends one chunk to its endpoint and parses the reply. Transport and
/// protocol failures yield the SAFE "inference unavailable" verdict and
/// the error itself.
pub fn infer_chunk(client: &ChatClient, payload: &PromptPayload, cfg: &VlmConfig) -> (VlmVerdict, Option<Error>) {
    let endpoint = cfg.endpoint_for(payload.chunk_index);
    match client.complete(endpoint, &payload.request_body(cfg)) {
        Ok(text) => {
            let (level, summary, parse_mode) = parse_verdict(&text);
            let verdict = VlmVerdict { level, summary, raw_response: text, chunk_index: payload.chunk_index, parse_mode };
            (verdict, None)
        }
        Err(e) => {
            tracing::warn!(chunk = payload.chunk_index, endpoint, error = %e, "vlm inference failed");
            (VlmVerdict::unavailable(payload.chunk_index), Some(e))
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use image::RgbImage;

    use super::*;
    use crate::mock::{MockResponse, MockServer};
    use crate::risk::RiskLevel;
    use crate::vlm::{build_prompt, ChunkFrame, ChunkSample, ParseMode};

    fn payload(index: u64, cfg: &VlmConfig) -> PromptPayload {
        let img = Arc::new(RgbImage::new(4, 4));
        let frames = (0..24).map(|i| ChunkFrame { frame_index: i, ts_ms: i as i64, image: img.clone() }).collect();
        build_prompt(&ChunkSample { chunk_index: index, action_frames: frames, context_frames: vec![], time_span: (0, 23) }, None, cfg)
    }

    #[test]
    fn scripted_danger_is_structured() {
        let server = MockServer::start(|_| MockResponse::chat(r#"{"level":"DANGER","summary":"fight near exit"}"#));
        let cfg = VlmConfig { endpoints: vec![server.url()], ..Default::default() };
        let (v, err) = infer_chunk(&ChatClient::new(&cfg), &payload(0, &cfg), &cfg);
        assert!(err.is_none());
        assert_eq!((v.level, v.parse_mode, v.summary.as_str()), (RiskLevel::Danger, ParseMode::Structured, "fight near exit"));
        let req = server.requests().pop().unwrap();
        assert_eq!(req.path, "/v1/chat/completions");
        let body = req.json();
        assert_eq!(body["max_tokens"], 10024);
        assert_eq!(body["top_p"], 0.6);
    }

    #[test]
    fn timeout_gives_unavailable() {
        let server = MockServer::start(|_| MockResponse::chat("{}").delayed(800));
        let cfg = VlmConfig { endpoints: vec![server.url()], request_timeout_ms: 100, ..Default::default() };
        let (v, err) = infer_chunk(&ChatClient::new(&cfg), &payload(5, &cfg), &cfg);
        assert!(err.is_some());
        assert_eq!(v, VlmVerdict::unavailable(5));
    }

    #[test]
    fn dual_mode_alternates() {
        let a = MockServer::start(|_| MockResponse::chat("all calm"));
        let b = MockServer::start(|_| MockResponse::chat("all calm"));
        let cfg = VlmConfig { dual_server_mode: true, endpoints: vec![a.url(), b.url()], ..Default::default() };
        let client = ChatClient::new(&cfg);
        let order: Vec<usize> = (0..4).map(|i| cfg.endpoint_for(i)).collect();
        assert_eq!(order, [0, 1, 0, 1]);
        for i in 0..4 {
            infer_chunk(&client, &payload(i, &cfg), &cfg);
        }
        assert_eq!((a.requests().len(), b.requests().len()), (2, 2));
    }
}
