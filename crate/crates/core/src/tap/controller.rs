//! Robot controller arbitrating between incoming actions and TAPs.
//!
//! Each tick receives one action and one TAP command:
//!
//! 1. With no TAP running, a non-empty command starts that TAP this tick.
//!    Axis locks and unlocks complete instantly by installing or removing
//!    the standing mask.
//! 2. While a waypoint or routine runs, its open-loop output is emitted and
//!    the incoming action is ignored. Commands arriving meanwhile are
//!    discarded, not queued.
//! 3. A TAP that reports finished releases the controller; the next tick
//!    executes the incoming action again.
//! 4. Otherwise the incoming action is executed, constrained by any
//!    standing axis lock.

use crate::action::Action;
use crate::geometry::{constrained_delta, AxisMask, Pose};
use crate::sim::WorldState;
use crate::tap::library::{TapCommand, TapKind, TapLibrary};
use crate::tap::routine::{routine_plan, RoutinePlan};
use crate::tap::waypoint::waypoint_step;
use serde::{Deserialize, Serialize};

/// Progress of the running durative TAP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TapProgress {
    Routine { plan: RoutinePlan, next: usize },
    Waypoint { start_distance: f64, fraction: f64 },
}

impl TapProgress {
    /// (step index, tick within step) for routines.
    pub fn routine_position(&self) -> Option<(usize, usize)> {
        match self {
            TapProgress::Routine { plan, next } => {
                let idx = (*next).min(plan.len().saturating_sub(1));
                let step = *plan.step_of_tick.get(idx)?;
                let first = plan.step_of_tick.iter().position(|&s| s == step)?;
                Some((step, idx - first))
            }
            TapProgress::Waypoint { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ControllerState {
    pub active: Option<usize>,
    pub progress: Option<TapProgress>,
    pub lock_reference: Option<Pose>,
    pub active_mask: Option<AxisMask>,
}

impl ControllerState {
    pub fn is_busy(&self) -> bool {
        self.active.is_some()
    }
}

/// Where the emitted action came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmittedBy {
    /// The action supplied with the tick (policy or operator).
    Incoming,
    /// The running TAP's open-loop behavior.
    Tap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TapDecision {
    Accepted(usize),
    /// Arrived while another TAP was running.
    Discarded(usize),
    /// Not in the library; state unchanged.
    Rejected(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickOutput {
    pub action: Action,
    pub emitted_by: EmittedBy,
    pub decision: Option<TapDecision>,
    /// The running TAP finished on this tick.
    pub finished: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Controller {
    library: TapLibrary,
    control_period: f64,
}

impl Controller {
    pub fn new(library: TapLibrary, control_period: f64) -> Self {
        Self {
            library,
            control_period,
        }
    }

    pub fn library(&self) -> &TapLibrary {
        &self.library
    }

    pub fn control_period(&self) -> f64 {
        self.control_period
    }

    pub fn tick(&self, cs: &mut ControllerState, ws: &WorldState, incoming: &Action, tap: TapCommand) -> TickOutput {
        let current = ws.ee_pose;
        let mut decision = None;

        if let TapCommand::Tap(id) = tap {
            match self.library.get(id) {
                None => decision = Some(TapDecision::Rejected(id)),
                Some(_) if cs.active.is_some() => decision = Some(TapDecision::Discarded(id)),
                Some(spec) => {
                    decision = Some(TapDecision::Accepted(id));
                    match spec.kind() {
                        TapKind::AxisLock => {
                            cs.active_mask = spec.mask();
                            cs.lock_reference = Some(current);
                        }
                        TapKind::AxisUnlock => {
                            cs.active_mask = None;
                            cs.lock_reference = None;
                        }
                        TapKind::Routine => {
                            let plan =
                                routine_plan(spec, &current, self.control_period).expect("library validated routine");
                            cs.active = Some(id);
                            cs.progress = Some(TapProgress::Routine { plan, next: 0 });
                        }
                        TapKind::Waypoint => {
                            let target = spec.waypoint_pose().expect("waypoint pose");
                            cs.active = Some(id);
                            cs.progress = Some(TapProgress::Waypoint {
                                start_distance: current.distance_to(&target),
                                fraction: 0.0,
                            });
                        }
                    }
                }
            }
        }

        if let Some(id) = cs.active {
            let (action, finished) = self.advance(cs, id, ws);
            if finished {
                cs.active = None;
                cs.progress = None;
                // A standing lock re-anchors where the TAP left the robot.
                if cs.active_mask.is_some() {
                    cs.lock_reference = Some(crate::geometry::compose(&current, &action.delta));
                }
            }
            return TickOutput {
                action,
                emitted_by: EmittedBy::Tap,
                decision,
                finished: finished.then_some(id),
            };
        }

        let action = match (&cs.active_mask, &cs.lock_reference) {
            (Some(mask), Some(reference)) => Action {
                delta: constrained_delta(&current, &incoming.delta, reference, mask),
                gripper: incoming.gripper,
            },
            _ => *incoming,
        };
        TickOutput {
            action,
            emitted_by: EmittedBy::Incoming,
            decision,
            finished: None,
        }
    }

    fn advance(&self, cs: &mut ControllerState, id: usize, ws: &WorldState) -> (Action, bool) {
        let spec = self.library.get(id).expect("active TAP in library");
        match cs.progress.as_mut().expect("durative TAP has progress") {
            TapProgress::Routine { plan, next } => {
                let action = plan.actions.get(*next).copied().unwrap_or_default();
                *next += 1;
                (action, *next >= plan.len())
            }
            TapProgress::Waypoint {
                start_distance,
                fraction,
            } => {
                let (action, finished) =
                    waypoint_step(spec, &ws.ee_pose, ws.gripper, self.control_period).expect("waypoint spec");
                let target = spec.waypoint_pose().expect("waypoint pose");
                let after = crate::geometry::compose(&ws.ee_pose, &action.delta);
                *fraction = if *start_distance > 0.0 {
                    (1.0 - after.distance_to(&target) / *start_distance).clamp(0.0, 1.0)
                } else {
                    1.0
                };
                (action, finished)
            }
        }
    }
}
