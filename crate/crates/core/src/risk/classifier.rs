use serde::{Deserialize, Serialize};

use super::mock::{mock_kinematic_classifier, MockKinematicConfig};
use super::ClassDistribution;
use crate::error::{Error, Result};
use crate::infer::InferenceClient;
use crate::preprocess::ClipTensor;

/// Display label for the active classifier backbone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Backbone {
    #[serde(rename = "ProtoGCN")]
    ProtoGcn,
    #[serde(rename = "CTR-GCN")]
    CtrGcn,
    #[serde(rename = "mock")]
    Mock,
}

impl Backbone {
    pub fn label(self) -> &'static str {
        match self {
            Backbone::ProtoGcn => "ProtoGCN",
            Backbone::CtrGcn => "CTR-GCN",
            Backbone::Mock => "mock",
        }
    }
}

impl std::str::FromStr for Backbone {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "protogcn" => Ok(Backbone::ProtoGcn),
            "ctr-gcn" | "ctrgcn" => Ok(Backbone::CtrGcn),
            "mock" => Ok(Backbone::Mock),
            other => Err(Error::Config(format!("unknown backbone {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub enum ClassifierBackend {
    MockKinematic(MockKinematicConfig),
    /// `/v1/infer` with input shape `(nc, 2, 100, 25, 3)`; expects outputs of
    /// shape `(nc, classes)`, either probabilities or logits.
    External { client: InferenceClient, model: String, num_classes: usize },
}

#[derive(Debug, Clone)]
pub struct ClassifierHandle {
    pub backbone: Backbone,
    pub backend: ClassifierBackend,
}

impl ClassifierHandle {
    pub fn mock(cfg: MockKinematicConfig) -> Self {
        ClassifierHandle { backbone: Backbone::Mock, backend: ClassifierBackend::MockKinematic(cfg) }
    }

    pub fn external(client: InferenceClient, backbone: Backbone, num_classes: usize) -> Self {
        ClassifierHandle {
            backbone,
            backend: ClassifierBackend::External {
                client,
                model: backbone.label().to_string(),
                num_classes,
            },
        }
    }

    /// One distribution per clip in the batch. Safe to call concurrently;
    /// external requests are issued independently per caller.
    pub fn classify(&self, t: &ClipTensor) -> Result<Vec<ClassDistribution>> {
        if t.data.len() != t.shape.iter().product::<usize>() {
            return Err(Error::Shape(format!("tensor data does not match shape {:?}", t.shape)));
        }
        if t.clips() == 0 {
            return Ok(Vec::new());
        }
        match &self.backend {
            ClassifierBackend::MockKinematic(cfg) => {
                Ok((0..t.clips()).map(|n| mock_kinematic_classifier(&t.sample(n), cfg)).collect())
            }
            ClassifierBackend::External { client, model, num_classes } => {
                let resp = client.infer(
                    model,
                    &t.shape,
                    &t.data,
                    serde_json::json!({"stage": "classify", "layout": "nc,M,T,V,C"}),
                )?;
                if resp.shape != [t.clips(), *num_classes] {
                    return Err(Error::Protocol(format!(
                        "classifier returned shape {:?}, expected [{}, {num_classes}]",
                        resp.shape,
                        t.clips()
                    )));
                }
                resp.outputs
                    .chunks_exact(*num_classes)
                    .map(|row| {
                        let sum: f64 = row.iter().sum();
                        if row.iter().all(|p| *p >= 0.0)
                            && (sum - 1.0).abs() <= ClassDistribution::SUM_TOLERANCE
                        {
                            ClassDistribution::new(row.to_vec())
                        } else {
                            ClassDistribution::from_logits(row)
                        }
                    })
                    .collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infer::InferResponse;
    use crate::mock::{MockResponse, MockServer};
    use crate::preprocess::{format_gcn_input, NtuSample};
    use std::time::Duration;

    #[test]
    fn empty_batch_gives_empty_list() {
        let t = format_gcn_input(&[]).unwrap();
        assert!(ClassifierHandle::mock(Default::default()).classify(&t).unwrap().is_empty());
    }

    #[test]
    fn external_logits_are_normalized() {
        let server = MockServer::start(|req| {
            let shape = req.json()["shape"].clone();
            let nc = shape[0].as_u64().unwrap() as usize;
            let mut outputs = vec![0.0; nc * 60];
            outputs[49] = 5.0;
            MockResponse::json(&InferResponse { outputs, shape: vec![nc, 60] })
        });
        let h = ClassifierHandle::external(
            InferenceClient::new(server.url(), Duration::from_secs(5)),
            Backbone::ProtoGcn,
            60,
        );
        let sample = NtuSample::single(vec![crate::geometry::NtuPose25::zeroed(); 100]);
        let t = format_gcn_input(&[sample]).unwrap();
        let d = h.classify(&t).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].top().0, super::super::ActionClass(50));
        assert!((d[0].probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(server.requests()[0].json()["model"], "ProtoGCN");
    }

    #[test]
    fn unreachable_external_is_an_error() {
        let h = ClassifierHandle::external(
            InferenceClient::new("http://127.0.0.1:9", Duration::from_millis(200)),
            Backbone::CtrGcn,
            60,
        );
        let t = format_gcn_input(&[NtuSample::single(vec![Default::default(); 100])]).unwrap();
        assert!(matches!(h.classify(&t), Err(Error::Inference(_))));
    }
}
