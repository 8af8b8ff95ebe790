//! The per-tick command executed by the robot: a pose delta plus a tool
//! command (gripper closure, or plunger position for syringe tasks).

use crate::geometry::{PoseDelta, Vec3};
use serde::{Deserialize, Serialize};

pub const ACTION_DIM: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Action {
    pub delta: PoseDelta,
    pub gripper: f64,
}

impl Action {
    pub fn new(delta: PoseDelta, gripper: f64) -> Self {
        Self { delta, gripper }
    }

    /// No motion, tool commanded to `gripper`.
    pub fn hold(gripper: f64) -> Self {
        Self {
            delta: PoseDelta::zero(),
            gripper,
        }
    }

    /// Layout: translation xyz, rotation vector xyz, tool command.
    pub fn to_array(&self) -> [f64; ACTION_DIM] {
        let t = self.delta.translation;
        let r = self.delta.rotation;
        [t.x, t.y, t.z, r.x, r.y, r.z, self.gripper]
    }

    pub fn from_slice(v: &[f64]) -> Self {
        assert!(v.len() >= ACTION_DIM, "action slice too short");
        Self {
            delta: PoseDelta::new(Vec3::new(v[0], v[1], v[2]), Vec3::new(v[3], v[4], v[5])),
            gripper: v[6],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.delta.is_finite() && self.gripper.is_finite()
    }
}
