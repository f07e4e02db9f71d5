//! Client for the generic tensor inference-server protocol shared by the
//! external lifter and the external action classifier:
//!
//! `POST {base}/v1/infer` with `{model, shape, data, meta}` (row-major flat
//! data) answered by `{outputs, shape}`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
pub struct InferRequest {
    pub model: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferResponse {
    pub outputs: Vec<f64>,
    pub shape: Vec<usize>,
}

#[derive(Clone)]
pub struct InferenceClient {
    base_url: String,
    timeout: Duration,
    agent: ureq::Agent,
}

impl std::fmt::Debug for InferenceClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InferenceClient")
            .field("base_url", &self.base_url)
            .field("timeout", &self.timeout)
            .finish()
    }
}

impl InferenceClient {
    /// The underlying agent is connection-pooled and may be shared across
    /// threads; requests from concurrent callers are issued independently.
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder().timeout_global(Some(timeout)).build().into();
        InferenceClient { base_url: base_url.into().trim_end_matches('/').to_string(), timeout, agent }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn infer(
        &self,
        model: &str,
        shape: &[usize],
        data: &[f64],
        meta: serde_json::Value,
    ) -> Result<InferResponse> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Shape(format!(
                "data length {} does not match shape {shape:?}",
                data.len()
            )));
        }
        let body = serde_json::json!({
            "model": model,
            "shape": shape,
            "data": data,
            "meta": meta,
        });
        let url = format!("{}/v1/infer", self.base_url);
        let mut resp = self
            .agent
            .post(&url)
            .send_json(&body)
            .map_err(|e| Error::Inference(format!("{url}: {e}")))?;
        let parsed: InferResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| Error::Protocol(format!("{url}: {e}")))?;
        if parsed.shape.iter().product::<usize>() != parsed.outputs.len() {
            return Err(Error::Protocol(format!(
                "response shape {:?} does not match {} outputs",
                parsed.shape,
                parsed.outputs.len()
            )));
        }
        Ok(parsed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mock::{MockResponse, MockServer};

    #[test]
    fn round_trip_against_mock() {
        let server = MockServer::start(|req| {
            let r: InferRequest = serde_json::from_slice(&req.body).unwrap();
            let doubled: Vec<f64> = r.data.iter().map(|v| v * 2.0).collect();
            MockResponse::json(&InferResponse { outputs: doubled, shape: r.shape })
        });
        let client = InferenceClient::new(server.url(), Duration::from_secs(5));
        let resp = client.infer("m", &[2, 2], &[1.0, 2.0, 3.0, 4.0], serde_json::json!({})).unwrap();
        assert_eq!(resp.outputs, vec![2.0, 4.0, 6.0, 8.0]);
        assert_eq!(server.requests()[0].path, "/v1/infer");
    }

    #[test]
    fn shape_mismatch_is_caught_before_sending() {
        let client = InferenceClient::new("http://127.0.0.1:9", Duration::from_millis(100));
        assert!(matches!(
            client.infer("m", &[3], &[1.0], serde_json::Value::Null),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn timeout_maps_to_inference_error() {
        let server = MockServer::start(|_| MockResponse::json(&serde_json::json!({})).delayed(500));
        let client = InferenceClient::new(server.url(), Duration::from_millis(100));
        assert!(matches!(
            client.infer("m", &[1], &[1.0], serde_json::Value::Null),
            Err(Error::Inference(_))
        ));
    }
}
