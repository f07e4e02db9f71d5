use super::layout::{h36m, H36mSource, NtuSource, H36M_EVAL_ORDER, H36M_JOINTS, NTU_JOINTS};
use super::lift::{lift_sequences, LifterHandle};
use super::{CocoPose17, H36mPose17, Keypoint, NtuPose25};
use crate::error::Result;

/// COCO-17 (2D) to H36M-17 (2D). Synthetic joints are midpoints with
/// min-confidence; a missing parent yields a missing joint.
pub fn coco_to_h36m(pose: &CocoPose17) -> H36mPose17 {
    let pose = CocoPose17::new(pose.joints.map(sanitize));
    let mut out = H36mPose17::zeroed();
    for &i in &H36M_EVAL_ORDER {
        out.joints[i] = match H36M_JOINTS[i].source {
            H36mSource::Coco { index } => pose.joints[index],
            H36mSource::Midpoint { a, b, from_h36m: false } => {
                Keypoint::midpoint(&pose.joints[a], &pose.joints[b])
            }
            H36mSource::Midpoint { a, b, from_h36m: true } => {
                Keypoint::midpoint(&out.joints[a], &out.joints[b])
            }
        };
    }
    out
}

fn sanitize(k: Keypoint) -> Keypoint {
    Keypoint::new(k.x, k.y, k.z, k.conf)
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn unit_or_zero(v: [f64; 3]) -> [f64; 3] {
    let n = norm(v);
    if n > 0.0 && n.is_finite() {
        [v[0] / n, v[1] / n, v[2] / n]
    } else {
        [0.0; 3]
    }
}

/// Pelvis-to-thorax distance, or 0 when either is missing.
pub(crate) fn torso_length(pose: &H36mPose17) -> f64 {
    let p = &pose.joints[h36m::PELVIS];
    let t = &pose.joints[h36m::THORAX];
    if p.is_missing() || t.is_missing() {
        return 0.0;
    }
    norm(sub(t.xyz(), p.xyz()))
}

fn ntu_frame(pose: &H36mPose17) -> NtuPose25 {
    let torso = torso_length(pose);
    let mut out = NtuPose25::zeroed();
    for (i, joint) in NTU_JOINTS.iter().enumerate() {
        out.joints[i] = match joint.source {
            NtuSource::H36m { index } => sanitize(pose.joints[index]),
            NtuSource::Midpoint { a, b } => Keypoint::midpoint(&pose.joints[a], &pose.joints[b]),
            NtuSource::Extend { anchor, from, along, lateral } => {
                let a = &pose.joints[anchor];
                if a.is_missing() {
                    Keypoint::MISSING
                } else {
                    let f = &pose.joints[from];
                    let dir = if f.is_missing() {
                        [0.0; 3]
                    } else {
                        unit_or_zero(sub(a.xyz(), f.xyz()))
                    };
                    // perpendicular in the image plane
                    let perp = unit_or_zero([-dir[1], dir[0], 0.0]);
                    let s = along.fraction() * torso;
                    let l = lateral.fraction() * torso;
                    Keypoint::new(
                        a.x + s * dir[0] + l * perp[0],
                        a.y + s * dir[1] + l * perp[1],
                        a.z + s * dir[2] + l * perp[2],
                        a.conf,
                    )
                }
            }
        };
    }
    out
}

/// H36M-17 (3D) to NTU-25 for every frame.
pub fn h36m_to_ntu25(seq: &[H36mPose17]) -> Vec<NtuPose25> {
    seq.iter().map(ntu_frame).collect()
}

/// Full COCO → H36M → lift → NTU chain for one person's clip.
pub fn remap_full(clip: &[CocoPose17], lifter: &LifterHandle) -> Result<Vec<NtuPose25>> {
    let mut out = remap_people(&[clip], lifter)?;
    Ok(out.pop().unwrap_or_default())
}

/// Remaps several people's clips together so the lifter sees one shared
/// normalization region (keeps relative positions between people intact).
pub fn remap_people(
    clips: &[&[CocoPose17]],
    lifter: &LifterHandle,
) -> Result<Vec<Vec<NtuPose25>>> {
    let h36: Vec<Vec<H36mPose17>> =
        clips.iter().map(|c| c.iter().map(coco_to_h36m).collect()).collect();
    let lifted = lift_sequences(&h36, lifter)?;
    Ok(lifted.iter().map(|s| h36m_to_ntu25(s)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::layout::{coco, ntu};

    fn coco_with(f: impl Fn(usize) -> Keypoint) -> CocoPose17 {
        CocoPose17::new(std::array::from_fn(f))
    }

    #[test]
    fn pelvis_is_hip_midpoint_with_min_conf() {
        let mut p = coco_with(|i| Keypoint::new_2d(i as f64, 10.0, 1.0));
        p.joints[coco::L_HIP] = Keypoint::new_2d(100.0, 200.0, 0.9);
        p.joints[coco::R_HIP] = Keypoint::new_2d(140.0, 200.0, 0.7);
        let h = coco_to_h36m(&p);
        assert_eq!(h.joints[h36m::PELVIS], Keypoint::new_2d(120.0, 200.0, 0.7));
    }

    #[test]
    fn origin_collapse_maps_to_origin() {
        let p = coco_with(|_| Keypoint { x: 0.0, y: 0.0, z: 0.0, conf: 1.0 });
        let h = coco_to_h36m(&p);
        for j in h.joints {
            assert_eq!(j, Keypoint { x: 0.0, y: 0.0, z: 0.0, conf: 1.0 });
        }
    }

    #[test]
    fn missing_shoulder_kills_upper_chain() {
        let mut p = coco_with(|i| Keypoint::new_2d(i as f64 * 3.0, 50.0 + i as f64, 0.8));
        p.joints[coco::L_SHOULDER] = Keypoint::MISSING;
        let h = coco_to_h36m(&p);
        for j in [h36m::THORAX, h36m::SPINE, h36m::NECK] {
            assert!(h.joints[j].is_missing(), "joint {j} should be missing");
            assert_eq!(h.joints[j].xyz(), [0.0; 3]);
        }
        assert!(!h.joints[h36m::PELVIS].is_missing());
    }

    #[test]
    fn hand_offset_follows_forearm() {
        // pelvis (0,0,0), thorax (0,-10,0) → torso length 10
        let mut h = H36mPose17::zeroed();
        h.joints[h36m::PELVIS] = Keypoint::new(0.0, 0.0, 0.0, 1.0);
        h.joints[h36m::THORAX] = Keypoint::new(0.0, -10.0, 0.0, 1.0);
        h.joints[h36m::L_ELBOW] = Keypoint::new(1.0, 2.0, 0.0, 0.9);
        h.joints[h36m::L_WRIST] = Keypoint::new(1.0, 2.0, 3.0, 0.8);
        let n = &h36m_to_ntu25(&[h])[0];
        // forearm direction (0,0,1); hand = wrist + 0.05*10*(0,0,1)
        assert_eq!(n.joints[ntu::L_HAND], Keypoint::new(1.0, 2.0, 3.5, 0.8));
        assert_eq!(n.joints[ntu::L_HAND_TIP], Keypoint::new(1.0, 2.0, 3.8, 0.8));
        // lateral of (0,0,1) in the image plane is degenerate → pure along offset
        assert_eq!(n.joints[ntu::L_THUMB], Keypoint::new(1.0, 2.0, 3.5, 0.8));
    }

    #[test]
    fn thumbs_offset_laterally_in_image_plane() {
        let mut h = H36mPose17::zeroed();
        h.joints[h36m::PELVIS] = Keypoint::new(0.0, 0.0, 0.0, 1.0);
        h.joints[h36m::THORAX] = Keypoint::new(0.0, -100.0, 0.0, 1.0);
        h.joints[h36m::R_ELBOW] = Keypoint::new(0.0, 0.0, 0.0, 1.0);
        h.joints[h36m::R_WRIST] = Keypoint::new(10.0, 0.0, 0.0, 0.6);
        let n = &h36m_to_ntu25(&[h])[0];
        // dir (1,0,0), perp (0,1,0); right thumb lateral = -4
        let t = n.joints[ntu::R_THUMB];
        assert!((t.x - 15.0).abs() < 1e-12 && (t.y + 4.0).abs() < 1e-12);
        assert_eq!(t.conf, 0.6);
    }

    #[test]
    fn zero_skeleton_maps_to_zero() {
        let h = H36mPose17::new([Keypoint { x: 0.0, y: 0.0, z: 0.0, conf: 1.0 }; 17]);
        let n = &h36m_to_ntu25(&[h])[0];
        assert!(n.is_zero());
    }

    #[test]
    fn missing_wrist_gives_missing_hand_chain() {
        let mut h = H36mPose17::zeroed();
        h.joints[h36m::L_ELBOW] = Keypoint::new(1.0, 1.0, 0.0, 1.0);
        let n = &h36m_to_ntu25(&[h])[0];
        for j in [ntu::L_HAND, ntu::L_HAND_TIP, ntu::L_THUMB] {
            assert_eq!(n.joints[j], Keypoint::MISSING);
        }
    }
}
