//! Open-loop routine expansion.
//!
//! The unscrew routine grabs, turns counter-clockwise, releases and turns
//! back `cycles` times, then grabs, turns once more and lifts straight up.
//! Rotations are pure yaw about the tool z axis captured at the start pose.

use crate::action::Action;
use crate::error::{Error, Result};
use crate::geometry::Pose;
use crate::geometry::{PoseDelta, Vec3};
use crate::tap::library::{TapParams, TapSpec};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutineStep {
    Close,
    RotateCcw,
    Open,
    RotateCw,
    Lift,
}

/// Parameters of the unscrew routine. Speeds are per second and converted
/// to per-tick amounts with the control period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoutineParams {
    pub cycles: u32,
    pub angle_per_grab: f64,
    pub lift_height: f64,
    pub rotation_speed: f64,
    pub lift_speed: f64,
    pub grip_ticks: u32,
    /// Accepted for completeness; the simulated gripper is binary.
    pub gripper_force: f64,
}

impl Default for RoutineParams {
    fn default() -> Self {
        Self {
            cycles: 3,
            angle_per_grab: std::f64::consts::FRAC_PI_2,
            lift_height: 0.08,
            rotation_speed: 3.0,
            lift_speed: 0.2,
            grip_ticks: 4,
            gripper_force: 20.0,
        }
    }
}

impl RoutineParams {
    pub const KNOWN_ROUTINES: [&'static str; 1] = ["unscrew"];

    pub fn from_map(routine: &str, map: &BTreeMap<String, f64>) -> Result<Self> {
        if !Self::KNOWN_ROUTINES.contains(&routine) {
            return Err(Error::UnknownName {
                name: routine.to_string(),
                valid: Self::KNOWN_ROUTINES.iter().map(|s| s.to_string()).collect(),
            });
        }
        let mut p = Self::default();
        for (key, &value) in map {
            match key.as_str() {
                "cycles" => p.cycles = as_count(key, value)?,
                "grip_ticks" => p.grip_ticks = as_count(key, value)?,
                "angle_per_grab" => p.angle_per_grab = value,
                "lift_height" => p.lift_height = value,
                "rotation_speed" => p.rotation_speed = value,
                "lift_speed" => p.lift_speed = value,
                "gripper_force" => p.gripper_force = value,
                other => return Err(Error::Config(format!("unknown routine parameter `{other}`"))),
            }
        }
        if !(p.angle_per_grab > 0.0
            && p.rotation_speed > 0.0
            && p.lift_speed > 0.0
            && p.lift_height >= 0.0
            && p.grip_ticks > 0)
        {
            return Err(Error::Config(
                "routine speeds, angle and grip ticks must be positive".into(),
            ));
        }
        Ok(p)
    }

    /// Step order: `cycles` x [close, CCW, open, CW], then close, CCW, lift.
    pub fn steps(&self) -> Vec<RoutineStep> {
        use RoutineStep::*;
        let mut steps = Vec::with_capacity(4 * self.cycles as usize + 3);
        for _ in 0..self.cycles {
            steps.extend([Close, RotateCcw, Open, RotateCw]);
        }
        steps.extend([Close, RotateCcw, Lift]);
        steps
    }
}

fn as_count(key: &str, value: f64) -> Result<u32> {
    if value >= 0.0 && value.fract() == 0.0 && value <= u32::MAX as f64 {
        Ok(value as u32)
    } else {
        Err(Error::Config(format!("`{key}` must be a nonnegative integer")))
    }
}

/// Splits `total` into ticks of at most `per_tick`, full ticks first.
fn split_ticks(total: f64, per_tick: f64) -> Vec<f64> {
    if total <= 0.0 {
        return Vec::new();
    }
    let n = ((total / per_tick) - 1e-9).ceil().max(1.0) as usize;
    let mut out = vec![per_tick; n - 1];
    out.push(total - per_tick * (n - 1) as f64);
    out
}

/// An expanded routine: per-tick actions plus the step each tick belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutinePlan {
    pub actions: Vec<Action>,
    pub step_of_tick: Vec<usize>,
    pub steps: Vec<RoutineStep>,
}

impl RoutinePlan {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Number of ticks spent in steps of the given type.
    pub fn ticks_in(&self, step: RoutineStep) -> usize {
        self.step_of_tick.iter().filter(|&&i| self.steps[i] == step).count()
    }

    /// Step sequence with empty steps (e.g. a zero-height lift) omitted.
    pub fn executed_steps(&self) -> Vec<RoutineStep> {
        let mut out: Vec<usize> = self.step_of_tick.clone();
        out.dedup();
        out.into_iter().map(|i| self.steps[i]).collect()
    }
}

/// Deterministic per-tick expansion of a routine TAP from `start`.
pub fn routine_plan(spec: &TapSpec, start: &Pose, control_period: f64) -> Result<RoutinePlan> {
    let TapParams::Routine { routine, params } = &spec.params else {
        return Err(Error::Usage(format!("TAP `{}` is not a routine", spec.name)));
    };
    let p = RoutineParams::from_map(routine, params)?;
    let axis = start.tool_z();
    let rotation_per_tick = p.rotation_speed * control_period;
    let lift_per_tick = p.lift_speed * control_period;

    let steps = p.steps();
    let mut actions = Vec::new();
    let mut step_of_tick = Vec::new();
    for (i, step) in steps.iter().enumerate() {
        let emitted: Vec<Action> = match step {
            RoutineStep::Close => vec![Action::hold(1.0); p.grip_ticks as usize],
            RoutineStep::Open => vec![Action::hold(0.0); p.grip_ticks as usize],
            RoutineStep::RotateCcw | RoutineStep::RotateCw => {
                let sign = if *step == RoutineStep::RotateCcw { 1.0 } else { -1.0 };
                let gripper = if *step == RoutineStep::RotateCcw { 1.0 } else { 0.0 };
                split_ticks(p.angle_per_grab, rotation_per_tick)
                    .into_iter()
                    .map(|a| Action::new(PoseDelta::rotation(axis * (sign * a)), gripper))
                    .collect()
            }
            RoutineStep::Lift => split_ticks(p.lift_height, lift_per_tick)
                .into_iter()
                .map(|h| Action::new(PoseDelta::translation(Vec3::new(0.0, 0.0, h)), 1.0))
                .collect(),
        };
        step_of_tick.extend(std::iter::repeat_n(i, emitted.len()));
        actions.extend(emitted);
    }
    Ok(RoutinePlan {
        actions,
        step_of_tick,
        steps,
    })
}

/// Per-tick actions of a routine TAP.
pub fn routine_trajectory(spec: &TapSpec, start: &Pose, control_period: f64) -> Result<Vec<Action>> {
    routine_plan(spec, start, control_period).map(|p| p.actions)
}
