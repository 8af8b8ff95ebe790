//! Where demonstrations triggered a TAP, as a padded box of EE offsets from
//! the task's reference object.

use super::{reference_position, TriggerRecord};
use crate::error::Result;
use crate::runtime::replay;
use crate::teleop::Demonstration;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerRegion {
    pub tap: usize,
    pub min: [f64; 3],
    pub max: [f64; 3],
    /// Largest tool scalar seen at a demonstrated trigger.
    pub max_gripper: f64,
    pub samples: usize,
}

impl TriggerRegion {
    /// Bounding box of the demonstrated triggers of `tap`, grown by
    /// `margin` on every side. `None` when no demonstration triggered it or
    /// the task has no reference object.
    pub fn from_demonstrations(demos: &[&Demonstration], tap: usize, margin: f64) -> Result<Option<Self>> {
        let mut min = [f64::INFINITY; 3];
        let mut max = [f64::NEG_INFINITY; 3];
        let mut max_gripper = f64::NEG_INFINITY;
        let mut samples = 0;
        for demo in demos {
            let r = replay(demo, &demo.task)?;
            for e in r.accepted_triggers().filter(|e| e.tap == tap) {
                let Some(o) = reference_position(demo.task.task, &e.world) else {
                    continue;
                };
                let d = e.world.ee_pose.position - o;
                for k in 0..3 {
                    min[k] = min[k].min(d[k]);
                    max[k] = max[k].max(d[k]);
                }
                max_gripper = max_gripper.max(e.world.gripper);
                samples += 1;
            }
        }
        if samples == 0 {
            return Ok(None);
        }
        Ok(Some(Self {
            tap,
            min: min.map(|v| v - margin),
            max: max.map(|v| v + margin),
            max_gripper,
            samples,
        }))
    }

    pub fn contains(&self, t: &TriggerRecord) -> bool {
        t.tap == self.tap
            && t.gripper <= self.max_gripper + 1e-9
            && t.offset
                .is_some_and(|o| (0..3).all(|k| self.min[k] <= o[k] && o[k] <= self.max[k]))
    }
}
