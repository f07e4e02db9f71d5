use super::{H36mPose17, Keypoint};
use crate::error::{Error, Result};
use crate::infer::InferenceClient;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LifterKind {
    Pseudo3d,
    External,
}

/// Selects the 2D→3D lifting backend.
#[derive(Debug, Clone, Default)]
pub enum LifterHandle {
    #[default]
    /// z = 0, x/y normalized into [-1, 1] by the clip-wide joint bounding box.
    Pseudo3d,
    /// Remote lifter speaking the `/v1/infer` protocol with shape `[T, 17, 3]`.
    External { client: InferenceClient, model: String },
}

impl LifterHandle {
    pub fn kind(&self) -> LifterKind {
        match self {
            LifterHandle::Pseudo3d => LifterKind::Pseudo3d,
            LifterHandle::External { .. } => LifterKind::External,
        }
    }
}

/// Lifts one sequence. See [`lift_sequences`].
pub fn lift_sequence(seq: &[H36mPose17], lifter: &LifterHandle) -> Result<Vec<H36mPose17>> {
    Ok(lift_sequences(&[seq.to_vec()], lifter)?.pop().unwrap_or_default())
}

/// Lifts several sequences. The pseudo-3D lifter normalizes all of them with
/// a single shared region so inter-person geometry survives.
pub fn lift_sequences(
    seqs: &[Vec<H36mPose17>],
    lifter: &LifterHandle,
) -> Result<Vec<Vec<H36mPose17>>> {
    if seqs.is_empty() || seqs.iter().any(|s| s.is_empty()) {
        return Err(Error::Degenerate("cannot lift an empty sequence".into()));
    }
    match lifter {
        LifterHandle::Pseudo3d => Ok(pseudo_3d(seqs)),
        LifterHandle::External { client, model } => {
            seqs.iter().map(|s| external(s, client, model)).collect()
        }
    }
}

struct Region {
    cx: f64,
    cy: f64,
    half: f64,
}

fn region(seqs: &[Vec<H36mPose17>]) -> Option<Region> {
    let mut min = [f64::INFINITY; 2];
    let mut max = [f64::NEG_INFINITY; 2];
    let mut any = false;
    for j in seqs.iter().flatten().flat_map(|p| p.joints.iter()).filter(|j| !j.is_missing()) {
        any = true;
        min[0] = min[0].min(j.x);
        min[1] = min[1].min(j.y);
        max[0] = max[0].max(j.x);
        max[1] = max[1].max(j.y);
    }
    any.then(|| Region {
        cx: (min[0] + max[0]) / 2.0,
        cy: (min[1] + max[1]) / 2.0,
        half: ((max[0] - min[0]).max(max[1] - min[1])) / 2.0,
    })
}

fn pseudo_3d(seqs: &[Vec<H36mPose17>]) -> Vec<Vec<H36mPose17>> {
    let region = region(seqs);
    seqs.iter()
        .map(|seq| {
            seq.iter()
                .map(|pose| {
                    let mut out = H36mPose17::zeroed();
                    for (o, j) in out.joints.iter_mut().zip(pose.joints.iter()) {
                        if j.is_missing() {
                            continue;
                        }
                        let r = region.as_ref().expect("non-missing joint implies a region");
                        let (x, y) = if r.half > 0.0 {
                            ((j.x - r.cx) / r.half, (j.y - r.cy) / r.half)
                        } else {
                            (0.0, 0.0)
                        };
                        *o = Keypoint { x, y, z: 0.0, conf: j.conf };
                    }
                    out
                })
                .collect()
        })
        .collect()
}

fn external(
    seq: &[H36mPose17],
    client: &InferenceClient,
    model: &str,
) -> Result<Vec<H36mPose17>> {
    let t = seq.len();
    let data: Vec<f64> = seq
        .iter()
        .flat_map(|p| p.joints.iter().flat_map(|j| [j.x, j.y, j.conf]))
        .collect();
    let resp = client
        .infer(model, &[t, 17, 3], &data, serde_json::json!({"stage": "lift"}))
        .map_err(|e| Error::LifterUnavailable(e.to_string()))?;
    if resp.shape != [t, 17, 3] || resp.outputs.len() != t * 17 * 3 {
        return Err(Error::Protocol(format!(
            "lifter returned shape {:?}, expected [{t}, 17, 3]",
            resp.shape
        )));
    }
    Ok(seq
        .iter()
        .zip(resp.outputs.chunks_exact(17 * 3))
        .map(|(pose, xyz)| {
            let mut out = H36mPose17::zeroed();
            for (k, (o, j)) in out.joints.iter_mut().zip(pose.joints.iter()).enumerate() {
                if !j.is_missing() {
                    *o = Keypoint::new(xyz[3 * k], xyz[3 * k + 1], xyz[3 * k + 2], j.conf);
                }
            }
            out
        })
        .collect())
}
