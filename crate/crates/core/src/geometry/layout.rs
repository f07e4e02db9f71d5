//! Canonical joint-order tables. Every stage indexes joints through these
//! constants; `docs/joint_layouts.json` is generated from [`document`].

use serde::Serialize;

pub mod coco {
    pub const NOSE: usize = 0;
    pub const L_EYE: usize = 1;
    pub const R_EYE: usize = 2;
    pub const L_EAR: usize = 3;
    pub const R_EAR: usize = 4;
    pub const L_SHOULDER: usize = 5;
    pub const R_SHOULDER: usize = 6;
    pub const L_ELBOW: usize = 7;
    pub const R_ELBOW: usize = 8;
    pub const L_WRIST: usize = 9;
    pub const R_WRIST: usize = 10;
    pub const L_HIP: usize = 11;
    pub const R_HIP: usize = 12;
    pub const L_KNEE: usize = 13;
    pub const R_KNEE: usize = 14;
    pub const L_ANKLE: usize = 15;
    pub const R_ANKLE: usize = 16;

    /// Joints used for the interaction-pairing centroid.
    pub const TORSO: [usize; 4] = [L_SHOULDER, R_SHOULDER, L_HIP, R_HIP];
}

pub mod h36m {
    pub const PELVIS: usize = 0;
    pub const R_HIP: usize = 1;
    pub const R_KNEE: usize = 2;
    pub const R_ANKLE: usize = 3;
    pub const L_HIP: usize = 4;
    pub const L_KNEE: usize = 5;
    pub const L_ANKLE: usize = 6;
    pub const SPINE: usize = 7;
    pub const THORAX: usize = 8;
    pub const NECK: usize = 9;
    pub const HEAD: usize = 10;
    pub const L_SHOULDER: usize = 11;
    pub const L_ELBOW: usize = 12;
    pub const L_WRIST: usize = 13;
    pub const R_SHOULDER: usize = 14;
    pub const R_ELBOW: usize = 15;
    pub const R_WRIST: usize = 16;
}

pub mod ntu {
    pub const SPINE_BASE: usize = 0;
    pub const SPINE_MID: usize = 1;
    pub const NECK: usize = 2;
    pub const HEAD: usize = 3;
    pub const L_SHOULDER: usize = 4;
    pub const L_ELBOW: usize = 5;
    pub const L_WRIST: usize = 6;
    pub const L_HAND: usize = 7;
    pub const R_SHOULDER: usize = 8;
    pub const R_ELBOW: usize = 9;
    pub const R_WRIST: usize = 10;
    pub const R_HAND: usize = 11;
    pub const L_HIP: usize = 12;
    pub const L_KNEE: usize = 13;
    pub const L_ANKLE: usize = 14;
    pub const L_FOOT: usize = 15;
    pub const R_HIP: usize = 16;
    pub const R_KNEE: usize = 17;
    pub const R_ANKLE: usize = 18;
    pub const R_FOOT: usize = 19;
    pub const SPINE_SHOULDER: usize = 20;
    pub const L_HAND_TIP: usize = 21;
    pub const L_THUMB: usize = 22;
    pub const R_HAND_TIP: usize = 23;
    pub const R_THUMB: usize = 24;
}

pub const COCO_JOINTS: [&str; 17] = [
    "nose",
    "left_eye",
    "right_eye",
    "left_ear",
    "right_ear",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
];

/// How an H36M joint is obtained from COCO.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum H36mSource {
    /// Copy of one COCO joint.
    Coco { index: usize },
    /// Midpoint of two joints; `from_h36m` selects whether the parents are
    /// COCO indices or already-computed H36M indices.
    Midpoint { a: usize, b: usize, from_h36m: bool },
}

pub struct H36mJoint {
    pub name: &'static str,
    pub parent: Option<usize>,
    pub source: H36mSource,
}

const fn direct(name: &'static str, parent: Option<usize>, index: usize) -> H36mJoint {
    H36mJoint { name, parent, source: H36mSource::Coco { index } }
}

/// H36M-17 order. Synthetic joints (pelvis, spine, thorax, neck) are listed
/// after their parents in [`H36M_EVAL_ORDER`].
pub const H36M_JOINTS: [H36mJoint; 17] = [
    H36mJoint {
        name: "pelvis",
        parent: None,
        source: H36mSource::Midpoint { a: coco::L_HIP, b: coco::R_HIP, from_h36m: false },
    },
    direct("right_hip", Some(h36m::PELVIS), coco::R_HIP),
    direct("right_knee", Some(h36m::R_HIP), coco::R_KNEE),
    direct("right_ankle", Some(h36m::R_KNEE), coco::R_ANKLE),
    direct("left_hip", Some(h36m::PELVIS), coco::L_HIP),
    direct("left_knee", Some(h36m::L_HIP), coco::L_KNEE),
    direct("left_ankle", Some(h36m::L_KNEE), coco::L_ANKLE),
    H36mJoint {
        name: "spine",
        parent: Some(h36m::PELVIS),
        source: H36mSource::Midpoint { a: h36m::PELVIS, b: h36m::THORAX, from_h36m: true },
    },
    H36mJoint {
        name: "thorax",
        parent: Some(h36m::SPINE),
        source: H36mSource::Midpoint {
            a: coco::L_SHOULDER,
            b: coco::R_SHOULDER,
            from_h36m: false,
        },
    },
    H36mJoint {
        name: "neck",
        parent: Some(h36m::THORAX),
        source: H36mSource::Midpoint { a: h36m::THORAX, b: h36m::HEAD, from_h36m: true },
    },
    direct("head", Some(h36m::NECK), coco::NOSE),
    direct("left_shoulder", Some(h36m::THORAX), coco::L_SHOULDER),
    direct("left_elbow", Some(h36m::L_SHOULDER), coco::L_ELBOW),
    direct("left_wrist", Some(h36m::L_ELBOW), coco::L_WRIST),
    direct("right_shoulder", Some(h36m::THORAX), coco::R_SHOULDER),
    direct("right_elbow", Some(h36m::R_SHOULDER), coco::R_ELBOW),
    direct("right_wrist", Some(h36m::R_ELBOW), coco::R_WRIST),
];

/// Evaluation order that guarantees midpoint parents are computed first.
pub const H36M_EVAL_ORDER: [usize; 17] = [1, 2, 3, 4, 5, 6, 10, 11, 12, 13, 14, 15, 16, 0, 8, 7, 9];

/// How an NTU joint is obtained from H36M (3D).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NtuSource {
    H36m { index: usize },
    /// Midpoint of two H36M joints.
    Midpoint { a: usize, b: usize },
    /// `anchor` + offset along the `from → anchor` limb direction, scaled by
    /// torso length. `lateral` adds a perpendicular component (signed).
    Extend { anchor: usize, from: usize, along: Offset, lateral: Offset },
}

/// Offset in units of 1/100 torso length (kept integral so the table stays `Eq`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Offset(pub i32);

impl Offset {
    pub fn fraction(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

pub struct NtuJoint {
    pub name: &'static str,
    pub parent: Option<usize>,
    pub source: NtuSource,
}

const fn ntu_direct(name: &'static str, parent: Option<usize>, index: usize) -> NtuJoint {
    NtuJoint { name, parent, source: NtuSource::H36m { index } }
}

const fn ntu_extend(
    name: &'static str,
    parent: usize,
    anchor: usize,
    from: usize,
    along: i32,
    lateral: i32,
) -> NtuJoint {
    NtuJoint {
        name,
        parent: Some(parent),
        source: NtuSource::Extend { anchor, from, along: Offset(along), lateral: Offset(lateral) },
    }
}

/// NTU-25 (Kinect V2) order.
pub const NTU_JOINTS: [NtuJoint; 25] = [
    ntu_direct("spine_base", None, h36m::PELVIS),
    ntu_direct("spine_mid", Some(ntu::SPINE_BASE), h36m::SPINE),
    ntu_direct("neck", Some(ntu::SPINE_SHOULDER), h36m::NECK),
    ntu_direct("head", Some(ntu::NECK), h36m::HEAD),
    ntu_direct("left_shoulder", Some(ntu::SPINE_SHOULDER), h36m::L_SHOULDER),
    ntu_direct("left_elbow", Some(ntu::L_SHOULDER), h36m::L_ELBOW),
    ntu_direct("left_wrist", Some(ntu::L_ELBOW), h36m::L_WRIST),
    ntu_extend("left_hand", ntu::L_WRIST, h36m::L_WRIST, h36m::L_ELBOW, 5, 0),
    ntu_direct("right_shoulder", Some(ntu::SPINE_SHOULDER), h36m::R_SHOULDER),
    ntu_direct("right_elbow", Some(ntu::R_SHOULDER), h36m::R_ELBOW),
    ntu_direct("right_wrist", Some(ntu::R_ELBOW), h36m::R_WRIST),
    ntu_extend("right_hand", ntu::R_WRIST, h36m::R_WRIST, h36m::R_ELBOW, 5, 0),
    ntu_direct("left_hip", Some(ntu::SPINE_BASE), h36m::L_HIP),
    ntu_direct("left_knee", Some(ntu::L_HIP), h36m::L_KNEE),
    ntu_direct("left_ankle", Some(ntu::L_KNEE), h36m::L_ANKLE),
    ntu_extend("left_foot", ntu::L_ANKLE, h36m::L_ANKLE, h36m::L_KNEE, 5, 0),
    ntu_direct("right_hip", Some(ntu::SPINE_BASE), h36m::R_HIP),
    ntu_direct("right_knee", Some(ntu::R_HIP), h36m::R_KNEE),
    ntu_direct("right_ankle", Some(ntu::R_KNEE), h36m::R_ANKLE),
    ntu_extend("right_foot", ntu::R_ANKLE, h36m::R_ANKLE, h36m::R_KNEE, 5, 0),
    NtuJoint {
        name: "spine_shoulder",
        parent: Some(ntu::SPINE_MID),
        source: NtuSource::Midpoint { a: h36m::SPINE, b: h36m::THORAX },
    },
    ntu_extend("left_hand_tip", ntu::L_HAND, h36m::L_WRIST, h36m::L_ELBOW, 8, 0),
    ntu_extend("left_thumb", ntu::L_HAND, h36m::L_WRIST, h36m::L_ELBOW, 5, 4),
    ntu_extend("right_hand_tip", ntu::R_HAND, h36m::R_WRIST, h36m::R_ELBOW, 8, 0),
    ntu_extend("right_thumb", ntu::R_HAND, h36m::R_WRIST, h36m::R_ELBOW, 5, -4),
];

/// COCO limb connections used for overlay drawing.
pub const COCO_LIMBS: [(usize, usize); 16] = [
    (coco::L_ANKLE, coco::L_KNEE),
    (coco::L_KNEE, coco::L_HIP),
    (coco::R_ANKLE, coco::R_KNEE),
    (coco::R_KNEE, coco::R_HIP),
    (coco::L_HIP, coco::R_HIP),
    (coco::L_SHOULDER, coco::L_HIP),
    (coco::R_SHOULDER, coco::R_HIP),
    (coco::L_SHOULDER, coco::R_SHOULDER),
    (coco::L_SHOULDER, coco::L_ELBOW),
    (coco::R_SHOULDER, coco::R_ELBOW),
    (coco::L_ELBOW, coco::L_WRIST),
    (coco::R_ELBOW, coco::R_WRIST),
    (coco::L_EYE, coco::R_EYE),
    (coco::NOSE, coco::L_EYE),
    (coco::NOSE, coco::R_EYE),
    (coco::L_EYE, coco::L_EAR),
];

#[derive(Serialize)]
struct JointRecord<S: Serialize> {
    index: usize,
    name: &'static str,
    parent: Option<usize>,
    source: S,
}

#[derive(Serialize)]
struct CocoSource {
    kind: &'static str,
}

#[derive(Serialize)]
struct LayoutDocument {
    coco17: Vec<JointRecord<CocoSource>>,
    h36m17: Vec<JointRecord<H36mSource>>,
    ntu25: Vec<JointRecord<NtuSource>>,
    notes: Vec<&'static str>,
}

/// Machine-readable description of all three layouts.
pub fn document() -> serde_json::Value {
    let doc = LayoutDocument {
        coco17: COCO_JOINTS
            .iter()
            .enumerate()
            .map(|(index, name)| JointRecord {
                index,
                name,
                parent: None,
                source: CocoSource { kind: "detector" },
            })
            .collect(),
        h36m17: H36M_JOINTS
            .iter()
            .enumerate()
            .map(|(index, j)| JointRecord { index, name: j.name, parent: j.parent, source: j.source })
            .collect(),
        ntu25: NTU_JOINTS
            .iter()
            .enumerate()
            .map(|(index, j)| JointRecord { index, name: j.name, parent: j.parent, source: j.source })
            .collect(),
        notes: vec![
            "h36m midpoint sources with from_h36m=false index COCO joints, otherwise H36M joints",
            "ntu extend offsets are in hundredths of torso length (pelvis to thorax distance)",
            "missing joints carry conf 0 and zero coordinates",
        ],
    };
    serde_json::to_value(doc).expect("layout document serializes")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eval_order_is_a_permutation_with_parents_first() {
        let mut seen = [false; 17];
        for &i in &H36M_EVAL_ORDER {
            if let H36mSource::Midpoint { a, b, from_h36m: true } = H36M_JOINTS[i].source {
                assert!(seen[a] && seen[b], "{} evaluated before its parents", H36M_JOINTS[i].name);
            }
            seen[i] = true;
        }
        assert!(seen.iter().all(|s| *s));
    }

    #[test]
    fn ntu_table_is_consistent() {
        assert_eq!(NTU_JOINTS[ntu::SPINE_MID].name, "spine_mid");
        let approximated =
            NTU_JOINTS.iter().filter(|j| matches!(j.source, NtuSource::Extend { .. })).count();
        assert_eq!(approximated, 8);
        for j in &NTU_JOINTS {
            if let Some(p) = j.parent {
                assert!(p < 25);
            }
        }
    }

    #[test]
    fn published_document_matches_tables() {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/joint_layouts.json");
        if std::env::var_os("EDGEGUARD_BLESS").is_some() {
            let text = serde_json::to_string_pretty(&document()).unwrap() + "\n";
            std::fs::write(path, text).unwrap();
        }
        let on_disk: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(path).expect("docs/joint_layouts.json"))
                .unwrap();
        assert_eq!(on_disk, document());
    }
}
