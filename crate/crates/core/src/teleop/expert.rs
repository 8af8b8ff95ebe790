//! Scripted stand-in for the human operator.
//!
//! A stateless function of the world and controller state plus a noise
//! seed. Hand noise is drawn from a generator keyed on (seed, tick), so the
//! same seed always reproduces the same input stream.

use crate::geometry::{clamp_norm, rotation_between, Pose, PoseDelta, Rotation, Vec3};
use crate::sim::{self, TaskConfig, TaskKind, WorldState, CONTAINER_A, CONTAINER_B, LID, TABLE, VIAL};
use crate::tap::ControllerState;
use crate::teleop::{GainSetting, TeleopInput};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Vial pre-insertion standoff along the vial axis.
const VIAL_STANDOFF: f64 = 0.04;
const VIAL_INSERT_DEPTH: f64 = 0.025;
/// Tip height used inside the transfer containers.
const CONTAINER_DIP_Z: f64 = 0.035;
const CARRY_Z: f64 = 0.15;
const PREGRASP_HEIGHT: f64 = 0.05;
const PLACE_Z: f64 = 0.06;
/// Distance to the lid at which the unscrew routine is triggered.
pub const ROUTINE_TRIGGER_DISTANCE: f64 = 0.004;

const NEAR_STEP: f64 = 0.01;
const FAR_STEP: f64 = 0.02;
const ROT_STEP: f64 = 0.1;
const SERVO_GAIN: f64 = 0.2;

struct Plan {
    target: Vec3,
    orientation: Option<Rotation>,
    tool: f64,
    tap: Option<usize>,
}

impl Plan {
    fn go(target: Vec3, tool: f64) -> Self {
        Self {
            target,
            orientation: None,
            tool,
            tap: None,
        }
    }

    fn hold(ws: &WorldState, tool: f64) -> Self {
        Self::go(ws.ee_pose.position, tool)
    }
}

fn tap_id(cfg: &TaskConfig, name: &str) -> usize {
    cfg.library()
        .require(name)
        .unwrap_or_else(|e| panic!("scripted operator needs TAP `{name}`: {e}"))
        .id
}

/// Orientation whose tool z points along `axis`, reached by the smallest
/// rotation from `current`.
fn aligned(current: &Pose, axis: &Vec3) -> Rotation {
    rotation_between(&current.tool_z(), axis) * current.orientation
}

fn vial_plan(cfg: &TaskConfig, ws: &WorldState, cs: &ControllerState) -> Plan {
    let vial = ws.object(VIAL).expect("vial");
    let u = vial.pose.tool_z();
    let mouth = vial.pose.position;
    let p = ws.ee_pose.position;
    if cs.active_mask.is_none() {
        let pre = mouth + u * VIAL_STANDOFF;
        let orientation = aligned(&ws.ee_pose, &u);
        let mut plan = Plan::go(pre, 0.0);
        plan.orientation = Some(orientation);
        if (p - pre).norm() < 0.006 && ws.ee_pose.angle_to(&Pose::new(p, orientation)) < 0.06 {
            plan.tap = Some(tap_id(cfg, "lock rotation"));
        }
        return plan;
    }
    let (depth, radial, _) = sim::vial_relation(ws);
    // Once the plunger moves it keeps drawing.
    let draw = ws.gripper > 0.0 || (depth >= VIAL_INSERT_DEPTH - 0.005 && radial < 0.005);
    Plan::go(mouth - u * VIAL_INSERT_DEPTH, if draw { 1.0 } else { 0.0 })
}

fn transfer_plan(cfg: &TaskConfig, ws: &WorldState) -> Plan {
    let t = cfg.transfer();
    let cap = cfg.syringe().capacity;
    let p = ws.ee_pose.position;
    let a = ws.object(CONTAINER_A).expect("a").pose.position;
    let b = ws.object(CONTAINER_B).expect("b").pose.position;
    let horizontal = |c: &Vec3| (p.xy() - c.xy()).norm();
    let dip_a = Vec3::new(a.x, a.y, CONTAINER_DIP_Z);
    let dip_b = Vec3::new(b.x, b.y, CONTAINER_DIP_Z);
    let settled = |dip: &Vec3| (p - dip).norm() < 0.006;

    if ws.volume(CONTAINER_B) >= t.success_volume {
        return Plan::hold(ws, ws.gripper);
    }
    let closer_to_a = horizontal(&a) < horizontal(&b);
    if ws.gripper >= 0.999 && ws.flags.syringe_liquid > 0.5 * cap {
        if closer_to_a {
            if p.z < CARRY_Z {
                return Plan::go(Vec3::new(p.x, p.y, CARRY_Z + 0.01), 1.0);
            }
            let mut plan = Plan::hold(ws, 1.0);
            plan.tap = Some(tap_id(cfg, "go to waypoint b"));
            return plan;
        }
        let tool = if settled(&dip_b) { 0.0 } else { 1.0 };
        return Plan::go(dip_b, tool);
    }
    if ws.gripper > 0.001 {
        // Mid-stroke: finish drawing at A or dispensing at B in place.
        let tool = if closer_to_a { 1.0 } else { 0.0 };
        return Plan::hold(ws, tool);
    }
    let perch_a = match &cfg.library().require("go to waypoint a").expect("waypoint a").params {
        crate::tap::TapParams::Waypoint { position, .. } => Vec3::from(*position),
        _ => unreachable!("waypoint a is a waypoint"),
    };
    if p.z >= perch_a.z - 0.01 && (p.xy() - perch_a.xy()).norm() > 0.005 {
        let mut plan = Plan::hold(ws, 0.0);
        plan.tap = Some(tap_id(cfg, "go to waypoint a"));
        return plan;
    }
    let tool = if settled(&dip_a) { 1.0 } else { 0.0 };
    Plan::go(dip_a, tool)
}

fn unscrew_plan(cfg: &TaskConfig, ws: &WorldState) -> Plan {
    let u = cfg.unscrew();
    let lid = ws.object(LID).expect("lid");
    let p = ws.ee_pose.position;
    if ws.flags.lifted_early {
        return Plan::hold(ws, 0.0);
    }
    let mounted = lid.mounted == Some(true);
    if ws.is_held(LID) {
        if mounted {
            return Plan::hold(ws, 1.0);
        }
        let place = ws.object(TABLE).expect("table").pose.position;
        let target = Vec3::new(place.x, place.y, PLACE_Z);
        let tool = if ws.gripper < 1.0 || (p - target).norm() < 0.008 {
            0.0
        } else {
            1.0
        };
        return Plan::go(target, tool);
    }
    if !mounted && lid.pose.position.z <= u.table_rest_z + 1e-9 {
        return Plan::hold(ws, 0.0);
    }
    let l = lid.pose.position;
    let horizontal = (p.xy() - l.xy()).norm();
    let at_pregrasp_height = p.z > l.z + PREGRASP_HEIGHT - 0.005;
    let window = if at_pregrasp_height { 0.004 } else { 0.012 };
    // Grasps are always taken at the same wrist yaw.
    let grasp = Rotation::identity();
    let mut plan = if horizontal < window {
        Plan::go(l, 0.0)
    } else {
        Plan::go(Vec3::new(l.x, l.y, l.z + PREGRASP_HEIGHT), 0.0)
    };
    plan.orientation = Some(grasp);
    let off = ws.ee_pose.orientation.angle_to(&grasp);
    if (p - l).norm() < ROUTINE_TRIGGER_DISTANCE && off < 0.05 && ws.gripper < 0.1 {
        plan.tap = Some(tap_id(cfg, "execute routine unscrew"));
    }
    plan
}

fn noise_rng(noise_seed: u64, tick: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(noise_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ tick)
}

/// Input and gain the scripted operator produces for this state.
pub fn scripted_expert(
    cfg: &TaskConfig,
    ws: &WorldState,
    cs: &ControllerState,
    noise_seed: u64,
) -> (TeleopInput, GainSetting) {
    if cs.is_busy() {
        // A TAP is driving; the operator rests.
        return (
            TeleopInput {
                gripper: ws.gripper,
                ..Default::default()
            },
            GainSetting::default(),
        );
    }
    let plan = match cfg.task {
        TaskKind::VialAspiration => vial_plan(cfg, ws, cs),
        TaskKind::LiquidTransfer => transfer_plan(cfg, ws),
        TaskKind::Unscrew => unscrew_plan(cfg, ws),
    };

    let error = plan.target - ws.ee_pose.position;
    let far = error.norm() > cfg.expert.far_distance;
    let gain = if far { cfg.expert.far_gain } else { 1.0 };
    let step = if far { FAR_STEP } else { NEAR_STEP };
    let translation = clamp_norm(error * SERVO_GAIN, step);
    let rotation = match plan.orientation {
        Some(target) => {
            let d = ws.ee_pose.delta_to(&Pose::new(ws.ee_pose.position, target));
            clamp_norm(d.rotation * SERVO_GAIN, ROT_STEP)
        }
        None => Vec3::zeros(),
    };

    let mut rng = noise_rng(noise_seed, ws.tick);
    let tn = Normal::new(0.0, cfg.expert.translation_noise).expect("noise std");
    let rn = Normal::new(0.0, cfg.expert.rotation_noise).expect("noise std");
    let mut sample = |d: &Normal<f64>| Vec3::new(d.sample(&mut rng), d.sample(&mut rng), d.sample(&mut rng));
    let t_noise = sample(&tn);
    let r_noise = sample(&rn);

    let delta = PoseDelta::new(translation / gain + t_noise, rotation / gain + r_noise);
    (
        TeleopInput {
            delta,
            gripper: plan.tool,
            tap_button: plan.tap,
            text_command: None,
        },
        GainSetting::uniform(gain),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::teleop::record_scripted;

    #[test]
    fn same_seed_same_inputs() {
        let cfg = TaskKind::Unscrew.default_config().with_seed(4);
        let ws = sim::reset(&cfg);
        let cs = ControllerState::default();
        assert_eq!(scripted_expert(&cfg, &ws, &cs, 9), scripted_expert(&cfg, &ws, &cs, 9));
    }

    #[test]
    fn expert_solves_each_task() {
        for task in TaskKind::ALL {
            let cfg = task.default_config().with_seed(1);
            let demo = record_scripted(&cfg, 1).unwrap();
            assert!(
                demo.success(),
                "{task}: {:?}",
                demo.outcome.as_ref().map(|o| (o.failure, o.ticks))
            );
        }
    }
}
