//! Classifier input preparation: root normalization, temporal resampling to
//! a fixed length, and packing into an `(nc, M, T, V, C)` tensor.

use crate::error::{Error, Result};
use crate::geometry::layout::ntu;
use crate::geometry::{Keypoint, NtuPose25};

pub const PERSONS: usize = 2;
pub const FRAMES: usize = 100;
pub const JOINTS: usize = 25;
pub const CHANNELS: usize = 3;

/// Two person slots of equal length. Slot 1 may be entirely zero.
#[derive(Debug, Clone, PartialEq)]
pub struct NtuSample {
    pub persons: [Vec<NtuPose25>; PERSONS],
}

impl NtuSample {
    pub fn new(p0: Vec<NtuPose25>, p1: Vec<NtuPose25>) -> Result<Self> {
        if p0.len() != p1.len() {
            return Err(Error::Shape(format!(
                "person slots differ in length: {} vs {}",
                p0.len(),
                p1.len()
            )));
        }
        Ok(NtuSample { persons: [p0, p1] })
    }

    pub fn single(p0: Vec<NtuPose25>) -> Self {
        let n = p0.len();
        NtuSample { persons: [p0, vec![NtuPose25::zeroed(); n]] }
    }

    pub fn frames(&self) -> usize {
        self.persons[0].len()
    }

    /// `valid[m][t]`: any nonzero coordinate for person `m` at frame `t`.
    pub fn valid_mask(&self) -> [Vec<bool>; PERSONS] {
        [0, 1].map(|m| self.persons[m].iter().map(|p| !p.is_zero()).collect())
    }

    pub fn valid_count(&self, m: usize) -> usize {
        self.persons[m].iter().filter(|p| !p.is_zero()).count()
    }
}

/// Centers everything on person 0's spine_mid at its first valid frame,
/// after swapping slots when person 1 has strictly more valid frames.
/// All-zero frames stay all-zero.
pub fn pre_normalize_3d(s: &NtuSample) -> Result<NtuSample> {
    let mut out = s.clone();
    if out.valid_count(1) > out.valid_count(0) {
        out.persons.swap(0, 1);
    }
    let Some(first) = out.persons[0].iter().find(|p| !p.is_zero()) else {
        return Err(Error::Degenerate("sample has no valid frames".into()));
    };
    let root = first.joints[ntu::SPINE_MID];
    for person in out.persons.iter_mut() {
        for pose in person.iter_mut().filter(|p| !p.is_zero()) {
            for j in pose.joints.iter_mut() {
                j.x -= root.x;
                j.y -= root.y;
                j.z -= root.z;
            }
        }
    }
    Ok(out)
}

fn blend(a: &Keypoint, b: &Keypoint, f: f64) -> Keypoint {
    if f == 0.0 {
        return *a;
    }
    Keypoint {
        x: (1.0 - f) * a.x + f * b.x,
        y: (1.0 - f) * a.y + f * b.y,
        z: (1.0 - f) * a.z + f * b.z,
        conf: (1.0 - f) * a.conf + f * b.conf,
    }
}

/// Source position sampled by output frame `j` when resampling `t_in`
/// frames to `t_out` (inclusive endpoints).
pub fn source_position(j: usize, t_in: usize, t_out: usize) -> f64 {
    if t_out <= 1 {
        return 0.0;
    }
    j as f64 * (t_in - 1) as f64 / (t_out - 1) as f64
}

/// Linear temporal resampling to `FRAMES` frames.
pub fn uniform_sample_decode(s: &NtuSample) -> Result<NtuSample> {
    resample(s, FRAMES)
}

pub fn resample(s: &NtuSample, t_out: usize) -> Result<NtuSample> {
    let t_in = s.frames();
    if t_in == 0 {
        return Err(Error::Degenerate("cannot resample an empty clip".into()));
    }
    if s.persons[1].len() != t_in {
        return Err(Error::Shape("person slots differ in length".into()));
    }
    let persons = [0, 1].map(|m| {
        let src = &s.persons[m];
        (0..t_out)
            .map(|j| {
                let p = source_position(j, t_in, t_out);
                let lo = p.floor() as usize;
                let hi = (p.ceil() as usize).min(t_in - 1);
                let f = p - lo as f64;
                let mut out = NtuPose25::zeroed();
                for (k, o) in out.joints.iter_mut().enumerate() {
                    *o = blend(&src[lo].joints[k], &src[hi].joints[k], f);
                }
                out
            })
            .collect()
    });
    Ok(NtuSample { persons })
}

/// Dense `(nc, M, T, V, C)` tensor, row-major. Confidences are not included.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipTensor {
    pub shape: [usize; 5],
    pub data: Vec<f64>,
}

impl ClipTensor {
    pub fn clips(&self) -> usize {
        self.shape[0]
    }

    fn offset(&self, n: usize, m: usize, t: usize, v: usize, c: usize) -> usize {
        let [_, mm, tt, vv, cc] = self.shape;
        (((n * mm + m) * tt + t) * vv + v) * cc + c
    }

    pub fn get(&self, n: usize, m: usize, t: usize, v: usize, c: usize) -> f64 {
        self.data[self.offset(n, m, t, v, c)]
    }

    /// Unpacks clip `n` back into a sample (confidence set to 1 for nonzero
    /// joints, 0 otherwise).
    pub fn sample(&self, n: usize) -> NtuSample {
        let [_, _, tt, _, _] = self.shape;
        let persons = [0, 1].map(|m| {
            (0..tt)
                .map(|t| {
                    let mut pose = NtuPose25::zeroed();
                    for (v, j) in pose.joints.iter_mut().enumerate() {
                        let (x, y, z) = (self.get(n, m, t, v, 0), self.get(n, m, t, v, 1), self.get(n, m, t, v, 2));
                        let conf = if x != 0.0 || y != 0.0 || z != 0.0 { 1.0 } else { 0.0 };
                        *j = Keypoint { x, y, z, conf };
                    }
                    pose
                })
                .collect()
        });
        NtuSample { persons }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub fn format_gcn_input(samples: &[NtuSample]) -> Result<ClipTensor> {
    let mut data = Vec::with_capacity(samples.len() * PERSONS * FRAMES * JOINTS * CHANNELS);
    for (i, s) in samples.iter().enumerate() {
        if s.persons.iter().any(|p| p.len() != FRAMES) {
            return Err(Error::Shape(format!(
                "sample {i} has {} frames, expected {FRAMES}",
                s.frames()
            )));
        }
        for person in &s.persons {
            for pose in person {
                for j in &pose.joints {
                    data.extend_from_slice(&[j.x, j.y, j.z]);
                }
            }
        }
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("non-finite coordinate in tensor".into()));
    }
    Ok(ClipTensor { shape: [samples.len(), PERSONS, FRAMES, JOINTS, CHANNELS], data })
}

/// normalize → resample → pack for a batch.
pub fn prepare_batch(samples: &[NtuSample]) -> Result<ClipTensor> {
    let ready = samples
        .iter()
        .map(|s| uniform_sample_decode(&pre_normalize_3d(s)?))
        .collect::<Result<Vec<_>>>()?;
    format_gcn_input(&ready)
}
