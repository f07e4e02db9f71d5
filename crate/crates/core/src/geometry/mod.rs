//! Keypoint layouts and the COCO-17 → H36M-17 → NTU-25 remapping chain.

pub mod layout;
mod lift;
mod remap;

pub use lift::{lift_sequence, lift_sequences, LifterHandle, LifterKind};
pub use remap::{coco_to_h36m, h36m_to_ntu25, remap_full, remap_people};

use serde::{Deserialize, Serialize};

/// One joint observation. `conf == 0` marks the joint as missing.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub conf: f64,
}

impl Keypoint {
    pub const MISSING: Keypoint = Keypoint { x: 0.0, y: 0.0, z: 0.0, conf: 0.0 };

    /// Builds a keypoint, clamping `conf` into `[0, 1]`. Non-finite input
    /// coordinates or a zero confidence produce the missing sentinel.
    pub fn new(x: f64, y: f64, z: f64, conf: f64) -> Self {
        let conf = if conf.is_finite() { conf.clamp(0.0, 1.0) } else { 0.0 };
        if conf == 0.0 || !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Self::MISSING;
        }
        Keypoint { x, y, z, conf }
    }

    pub fn new_2d(x: f64, y: f64, conf: f64) -> Self {
        Self::new(x, y, 0.0, conf)
    }

    pub fn is_missing(&self) -> bool {
        self.conf == 0.0
    }

    pub fn xyz(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    /// Midpoint of two joints with min-confidence. Missing if either parent is.
    pub fn midpoint(a: &Keypoint, b: &Keypoint) -> Keypoint {
        if a.is_missing() || b.is_missing() {
            return Keypoint::MISSING;
        }
        Keypoint::new(
            (a.x + b.x) / 2.0,
            (a.y + b.y) / 2.0,
            (a.z + b.z) / 2.0,
            a.conf.min(b.conf),
        )
    }
}

macro_rules! pose_type {
    ($(#[$meta:meta])* $name:ident, $n:expr) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
        pub struct $name {
            #[serde(with = "serde_joints")]
            pub joints: [Keypoint; $n],
        }

        impl $name {
            pub const JOINTS: usize = $n;

            pub fn zeroed() -> Self {
                Self { joints: [Keypoint::MISSING; $n] }
            }

            pub fn new(joints: [Keypoint; $n]) -> Self {
                Self { joints }
            }

            /// True when every coordinate of every joint is exactly zero.
            pub fn is_zero(&self) -> bool {
                self.joints.iter().all(|j| j.x == 0.0 && j.y == 0.0 && j.z == 0.0)
            }
        }

        impl Default for $name {
            fn default() -> Self {
                Self::zeroed()
            }
        }

        impl std::ops::Index<usize> for $name {
            type Output = Keypoint;
            fn index(&self, i: usize) -> &Keypoint {
                &self.joints[i]
            }
        }

        impl std::ops::IndexMut<usize> for $name {
            fn index_mut(&mut self, i: usize) -> &mut Keypoint {
                &mut self.joints[i]
            }
        }
    };
}

pose_type!(
    /// 17 keypoints in COCO order.
    CocoPose17,
    17
);
pose_type!(
    /// 17 joints in the H36M order of [`layout::H36M_JOINTS`].
    H36mPose17,
    17
);
pose_type!(
    /// 25 joints in Kinect-V2 order of [`layout::NTU_JOINTS`]; joint 1 is spine_mid.
    NtuPose25,
    25
);

mod serde_joints {
    use super::Keypoint;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer, const N: usize>(
        joints: &[Keypoint; N],
        s: S,
    ) -> Result<S::Ok, S::Error> {
        s.collect_seq(joints.iter())
    }

    pub fn deserialize<'de, D: Deserializer<'de>, const N: usize>(
        d: D,
    ) -> Result<[Keypoint; N], D::Error> {
        let v: Vec<Keypoint> = Vec::deserialize(d)?;
        let n = v.len();
        v.try_into()
            .map_err(|_| D::Error::custom(format!("expected {N} joints, got {n}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keypoint_sanitizes_input() {
        assert_eq!(Keypoint::new(1.0, 2.0, 3.0, 0.0), Keypoint::MISSING);
        assert_eq!(Keypoint::new(f64::NAN, 2.0, 3.0, 0.5), Keypoint::MISSING);
        assert_eq!(Keypoint::new(1.0, 2.0, 3.0, 1.7).conf, 1.0);
        assert_eq!(Keypoint::new(1.0, 2.0, 3.0, -0.1), Keypoint::MISSING);
    }

    #[test]
    fn midpoint_propagates_missing() {
        let a = Keypoint::new_2d(100.0, 200.0, 0.9);
        let b = Keypoint::new_2d(140.0, 200.0, 0.7);
        assert_eq!(Keypoint::midpoint(&a, &b), Keypoint::new_2d(120.0, 200.0, 0.7));
        assert!(Keypoint::midpoint(&a, &Keypoint::MISSING).is_missing());
    }

    #[test]
    fn pose_serde_rejects_wrong_joint_count() {
        let json = serde_json::to_string(&CocoPose17::zeroed()).unwrap();
        let back: CocoPose17 = serde_json::from_str(&json).unwrap();
        assert!(back.is_zero());
        let bad = r#"{"joints":[{"x":0,"y":0,"z":0,"conf":0}]}"#;
        assert!(serde_json::from_str::<CocoPose17>(bad).is_err());
    }
}
