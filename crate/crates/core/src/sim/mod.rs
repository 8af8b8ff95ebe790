//! Deterministic flying-gripper workspace with the three benchmark tasks.
//!
//! `reset`, `step`, `observe` and `success` are pure functions over
//! [`WorldState`] values. Liquid is a scalar volume; the syringe holds
//! liquid and air, draws liquid only when the tip sits in a liquid zone and
//! expels air before liquid.

pub mod config;

pub use config::{Range, TaskConfig, TaskKind};

use crate::action::Action;
use crate::geometry::{clamp_norm, compose, from_rpy, rotation_between, twist, Pose, Rotation, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

pub const VIAL: &str = "vial";
pub const CONTAINER_A: &str = "container_a";
pub const CONTAINER_B: &str = "container_b";
pub const BOTTLE: &str = "bottle";
pub const LID: &str = "lid";
pub const TABLE: &str = "table";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    Vial,
    ContainerA,
    ContainerB,
    Bottle,
    Lid,
    /// Marks the placement region on the table.
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub id: String,
    pub kind: ObjectKind,
    pub pose: Pose,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub liquid_volume: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remaining_turns: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mounted: Option<bool>,
}

impl ObjectState {
    fn new(id: &str, kind: ObjectKind, pose: Pose) -> Self {
        Self {
            id: id.to_string(),
            kind,
            pose,
            liquid_volume: None,
            remaining_turns: None,
            mounted: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskFlags {
    pub syringe_liquid: f64,
    pub syringe_air: f64,
    /// Liquid expelled outside any container.
    pub spilled: f64,
    /// Lid rotation accumulated toward the next full turn.
    pub turn_progress: f64,
    pub lifted_early: bool,
    /// Lid pose in the tool frame while carried free of the threads.
    pub carry_offset: Option<Pose>,
    /// Tool height when the mounted lid was grasped.
    pub grasp_z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub ee_pose: Pose,
    /// 0 open, 1 closed. Plunger travel for syringe tasks.
    pub gripper: f64,
    pub held_object: Option<String>,
    pub objects: Vec<ObjectState>,
    pub tick: u64,
    pub flags: TaskFlags,
}

impl WorldState {
    pub fn object(&self, id: &str) -> Option<&ObjectState> {
        self.objects.iter().find(|o| o.id == id)
    }

    fn object_mut(&mut self, id: &str) -> &mut ObjectState {
        self.objects
            .iter_mut()
            .find(|o| o.id == id)
            .unwrap_or_else(|| panic!("object `{id}` missing"))
    }

    pub fn volume(&self, id: &str) -> f64 {
        self.object(id).and_then(|o| o.liquid_volume).unwrap_or(0.0)
    }

    /// Liquid across containers, syringe and spills.
    pub fn total_liquid(&self) -> f64 {
        self.objects.iter().filter_map(|o| o.liquid_volume).sum::<f64>()
            + self.flags.syringe_liquid
            + self.flags.spilled
    }

    pub fn lid(&self) -> Option<&ObjectState> {
        self.object(LID)
    }

    pub fn is_held(&self, id: &str) -> bool {
        self.held_object.as_deref() == Some(id)
    }

    /// Absorbing failure recorded by the physics.
    pub fn failed(&self) -> bool {
        self.flags.lifted_early
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub ee_pose: Pose,
    pub gripper: f64,
    pub task_features: Vec<f64>,
}

/// Number of entries ahead of the task features in [`Observation::to_vec`].
pub const BASE_OBSERVATION_DIM: usize = 10;

impl Observation {
    /// Flat policy input: position, first two rotation matrix columns,
    /// gripper, task features.
    pub fn to_vec(&self) -> Vec<f64> {
        let r = self.ee_pose.orientation.to_rotation_matrix();
        let m = r.matrix();
        let mut v = Vec::with_capacity(BASE_OBSERVATION_DIM + self.task_features.len());
        v.extend(self.ee_pose.position.iter());
        v.extend(m.column(0).iter());
        v.extend(m.column(1).iter());
        v.push(self.gripper);
        v.extend(&self.task_features);
        v
    }
}

pub fn observation_dim(task: TaskKind) -> usize {
    BASE_OBSERVATION_DIM
        + match task {
            TaskKind::VialAspiration => 13,
            TaskKind::LiquidTransfer => 9,
            TaskKind::Unscrew => 10,
        }
}

fn uniform(rng: &mut ChaCha8Rng, a: f64, b: f64) -> f64 {
    let u: f64 = rng.random();
    a + (b - a) * u
}

fn jitter(rng: &mut ChaCha8Rng, half: f64) -> f64 {
    uniform(rng, -half, half)
}

fn seed_rng(cfg: &TaskConfig) -> ChaCha8Rng {
    let task_salt = match cfg.task {
        TaskKind::VialAspiration => 0x7669_616c,
        TaskKind::LiquidTransfer => 0x7472_616e,
        TaskKind::Unscrew => 0x756e_7363,
    };
    ChaCha8Rng::seed_from_u64(cfg.seed ^ (task_salt << 32))
}

/// Vial axis (pointing out of the mouth) from tilt and azimuth.
pub fn vial_axis(tilt: f64, azimuth: f64) -> Vec3 {
    Vec3::new(tilt.sin() * azimuth.cos(), tilt.sin() * azimuth.sin(), tilt.cos())
}

/// Initial world state, a deterministic function of (task, seed). The
/// configuration is assumed validated.
pub fn reset(cfg: &TaskConfig) -> WorldState {
    let mut rng = seed_rng(cfg);
    let h = &cfg.home;
    let home = Vec3::new(
        h.position[0] + jitter(&mut rng, h.position_jitter),
        h.position[1] + jitter(&mut rng, h.position_jitter),
        h.position[2] + jitter(&mut rng, h.position_jitter),
    );
    let yaw = jitter(&mut rng, h.yaw_jitter);
    let ee_pose = Pose::new(home, from_rpy(0.0, 0.0, yaw));

    let mut objects = Vec::new();
    match cfg.task {
        TaskKind::VialAspiration => {
            let v = cfg.vial();
            let mouth = Vec3::new(
                v.mouth[0] + jitter(&mut rng, v.mouth_jitter),
                v.mouth[1] + jitter(&mut rng, v.mouth_jitter),
                v.mouth[2] + jitter(&mut rng, v.mouth_jitter),
            );
            let tilt = uniform(&mut rng, v.tilt.min, v.tilt.max);
            let azimuth = uniform(&mut rng, v.azimuth.min, v.azimuth.max);
            let axis = vial_axis(tilt, azimuth);
            let mut vial = ObjectState::new(
                VIAL,
                ObjectKind::Vial,
                Pose::new(mouth, rotation_between(&Vec3::z(), &axis)),
            );
            vial.liquid_volume = Some(v.volume);
            objects.push(vial);
        }
        TaskKind::LiquidTransfer => {
            let t = cfg.transfer();
            for (id, kind, c) in [
                (CONTAINER_A, ObjectKind::ContainerA, &t.a),
                (CONTAINER_B, ObjectKind::ContainerB, &t.b),
            ] {
                let center = Vec3::new(
                    c.center[0] + jitter(&mut rng, c.jitter),
                    c.center[1] + jitter(&mut rng, c.jitter),
                    0.0,
                );
                let mut o = ObjectState::new(id, kind, Pose::from_position(center));
                o.liquid_volume = Some(c.volume);
                objects.push(o);
            }
        }
        TaskKind::Unscrew => {
            let u = cfg.unscrew();
            let bottle = Vec3::new(
                u.bottle[0] + jitter(&mut rng, u.bottle_jitter),
                u.bottle[1] + jitter(&mut rng, u.bottle_jitter),
                0.0,
            );
            let lid_z = uniform(&mut rng, u.lid_z.min, u.lid_z.max);
            let turns = u.turns[rng.random_range(0..u.turns.len())];
            let place = Vec3::new(
                u.place_center[0] + jitter(&mut rng, u.place_jitter),
                u.place_center[1] + jitter(&mut rng, u.place_jitter),
                0.0,
            );
            // The bottle pose marks the top of its neck.
            let neck = Vec3::new(bottle.x, bottle.y, lid_z);
            objects.push(ObjectState::new(BOTTLE, ObjectKind::Bottle, Pose::from_position(neck)));
            let mut lid = ObjectState::new(
                LID,
                ObjectKind::Lid,
                Pose::from_position(Vec3::new(bottle.x, bottle.y, lid_z)),
            );
            lid.remaining_turns = Some(turns);
            lid.mounted = Some(true);
            objects.push(lid);
            objects.push(ObjectState::new(TABLE, ObjectKind::Table, Pose::from_position(place)));
        }
    }

    WorldState {
        ee_pose,
        gripper: 0.0,
        held_object: None,
        objects,
        tick: 0,
        flags: TaskFlags::default(),
    }
}

/// Tip placement relative to the vial: (axial depth below the mouth,
/// radial distance from the axis, angle between approach and vial axis).
pub fn vial_relation(ws: &WorldState) -> (f64, f64, f64) {
    let vial = ws.object(VIAL).expect("vial");
    let u = vial.pose.tool_z();
    let rel = ws.ee_pose.position - vial.pose.position;
    let depth = -rel.dot(&u);
    let radial = (rel + u * depth).norm();
    let align = ws.ee_pose.tool_z().dot(&u).clamp(-1.0, 1.0).acos();
    (depth, radial, align)
}

/// A tip that was inside the vial stays within its wall and above its
/// floor; withdrawing through the mouth is free.
fn vial_contact(before: &WorldState, next: &mut WorldState, cfg: &TaskConfig) {
    let v = cfg.vial();
    let (depth, radial, _) = vial_relation(before);
    if depth <= 0.0 || radial > v.mouth_radius {
        return;
    }
    let vial = next.object(VIAL).expect("vial");
    let (mouth, u) = (vial.pose.position, vial.pose.tool_z());
    let rel = next.ee_pose.position - mouth;
    let depth = -rel.dot(&u);
    if depth <= 0.0 {
        return;
    }
    let lateral = clamp_norm(rel + u * depth, v.mouth_radius);
    next.ee_pose.position = mouth + lateral - u * depth.min(v.depth.max);
}

/// Tip aligned with the vial axis and inside the mouth.
pub fn vial_tip_inside(ws: &WorldState, cfg: &TaskConfig) -> bool {
    let v = cfg.vial();
    let (depth, radial, align) = vial_relation(ws);
    align <= v.align_tolerance && v.depth.contains(depth) && radial <= v.mouth_radius
}

/// Container whose liquid zone holds the syringe tip.
pub fn transfer_zone(ws: &WorldState, cfg: &TaskConfig) -> Option<&'static str> {
    let t = cfg.transfer();
    let p = ws.ee_pose.position;
    if !t.zone_z.contains(p.z) {
        return None;
    }
    [CONTAINER_A, CONTAINER_B].into_iter().find(|id| {
        let c = ws.object(id).expect("container").pose.position;
        (p.xy() - c.xy()).norm() <= t.zone_radius
    })
}

fn liquid_source(ws: &WorldState, cfg: &TaskConfig) -> Option<&'static str> {
    match cfg.task {
        TaskKind::VialAspiration => vial_tip_inside(ws, cfg).then_some(VIAL),
        TaskKind::LiquidTransfer => transfer_zone(ws, cfg),
        TaskKind::Unscrew => None,
    }
}

/// Moves liquid and air according to a plunger change of `dv` milliliters.
fn syringe_flow(ws: &mut WorldState, cfg: &TaskConfig, dv: f64) {
    let zone = liquid_source(ws, cfg);
    if dv > 0.0 {
        let available = zone.map(|id| ws.volume(id)).unwrap_or(0.0);
        let liquid = dv.min(available);
        if let Some(id) = zone {
            let o = ws.object_mut(id);
            o.liquid_volume = Some(o.liquid_volume.unwrap_or(0.0) - liquid);
        }
        ws.flags.syringe_liquid += liquid;
        ws.flags.syringe_air += dv - liquid;
    } else if dv < 0.0 {
        let mut out = -dv;
        let air = out.min(ws.flags.syringe_air);
        ws.flags.syringe_air -= air;
        out -= air;
        let liquid = out.min(ws.flags.syringe_liquid);
        ws.flags.syringe_liquid -= liquid;
        match zone {
            Some(id) => {
                let o = ws.object_mut(id);
                o.liquid_volume = Some(o.liquid_volume.unwrap_or(0.0) + liquid);
            }
            None => ws.flags.spilled += liquid,
        }
    }
}

/// Signed rotation angle about the base vertical carried by `q`.
fn yaw_of(q: &Rotation) -> f64 {
    let t = twist(q, &Vec3::z());
    2.0 * t.k.atan2(t.w)
}

fn release_lid(ws: &mut WorldState, cfg: &TaskConfig) {
    let u = cfg.unscrew();
    ws.held_object = None;
    ws.flags.carry_offset = None;
    ws.flags.grasp_z = None;
    let bottle = ws.object(BOTTLE).expect("bottle").pose.position;
    let lid = ws.object_mut(LID);
    if lid.mounted == Some(true) {
        return;
    }
    let p = lid.pose.position;
    let on_bottle = (p.xy() - bottle.xy()).norm() <= u.bottle_radius;
    // Over the bottle it drops back onto the neck, loose.
    let rest = if on_bottle {
        bottle
    } else {
        Vec3::new(p.x, p.y, u.table_rest_z)
    };
    let yaw = yaw_of(&lid.pose.orientation);
    lid.pose = Pose::new(rest, from_rpy(0.0, 0.0, yaw));
}

fn unscrew_step(ws: &mut WorldState, cfg: &TaskConfig, before: &Pose, prev_gripper: f64) {
    let u = cfg.unscrew().clone();
    if ws.flags.lifted_early {
        return;
    }
    let closing = prev_gripper <= 0.5 && ws.gripper > 0.5;
    let opening = prev_gripper > 0.5 && ws.gripper <= 0.5;

    if ws.is_held(LID) {
        let lid = ws.lid().expect("lid").clone();
        if lid.mounted == Some(true) {
            let delta = ws.ee_pose.orientation * before.orientation.inverse();
            let yaw = yaw_of(&delta);
            let mut progress = (ws.flags.turn_progress + yaw).max(0.0);
            let mut remaining = lid.remaining_turns.unwrap_or(0);
            let mut lid_pose = lid.pose;
            lid_pose.orientation = Rotation::from_scaled_axis(Vec3::z() * yaw) * lid_pose.orientation;
            while remaining > 0 && progress >= TAU - 1e-9 {
                progress -= TAU;
                remaining -= 1;
            }
            if remaining == 0 {
                progress = 0.0;
            }
            ws.flags.turn_progress = progress.max(0.0);
            let grasp_z = ws.flags.grasp_z.unwrap_or(before.position.z);
            let rise = ws.ee_pose.position.z - grasp_z;
            let slip = (ws.ee_pose.position.xy() - lid_pose.position.xy()).norm();
            {
                let l = ws.object_mut(LID);
                l.pose = Pose::new(lid_pose.position, lid_pose.orientation);
                l.remaining_turns = Some(remaining);
                if remaining == 0 {
                    l.mounted = Some(false);
                }
            }
            if remaining > 0 && rise > u.break_height {
                ws.flags.lifted_early = true;
                ws.held_object = None;
                ws.flags.grasp_z = None;
                return;
            }
            if remaining == 0 {
                ws.flags.grasp_z = None;
                let lid_pose = ws.lid().unwrap().pose;
                ws.flags.carry_offset = Some(relative(&ws.ee_pose, &lid_pose));
            } else if slip > u.grasp_distance || rise < -u.grasp_distance {
                ws.held_object = None;
                ws.flags.grasp_z = None;
            }
        } else {
            let offset = ws.flags.carry_offset.unwrap_or_else(|| relative(before, &lid.pose));
            let mut pose = apply(&ws.ee_pose, &offset);
            let neck = ws.object(BOTTLE).expect("bottle").pose.position;
            if pose.position.z < neck.z + u.break_height && (lid.pose.position.xy() - neck.xy()).norm() < 1e-9 {
                // A loose lid still seated on the neck turns about the bottle axis.
                pose.position = neck;
            }
            ws.object_mut(LID).pose = pose;
        }
        if opening {
            release_lid(ws, cfg);
        }
        return;
    }

    if closing {
        let lid = ws.lid().expect("lid").clone();
        let distance = (ws.ee_pose.position - lid.pose.position).norm();
        let tilt = ws.ee_pose.approach().dot(&-Vec3::z()).clamp(-1.0, 1.0).acos();
        if distance <= u.grasp_distance && tilt <= u.grasp_tilt {
            ws.held_object = Some(LID.to_string());
            if lid.mounted == Some(true) {
                ws.flags.grasp_z = Some(ws.ee_pose.position.z);
            } else {
                ws.flags.carry_offset = Some(relative(&ws.ee_pose, &lid.pose));
            }
        }
    }
}

/// `target` expressed in the frame of `frame`.
fn relative(frame: &Pose, target: &Pose) -> Pose {
    let inv = frame.orientation.inverse();
    Pose {
        position: inv * (target.position - frame.position),
        orientation: inv * target.orientation,
    }
}

fn apply(frame: &Pose, local: &Pose) -> Pose {
    Pose::new(
        frame.position + frame.orientation * local.position,
        frame.orientation * local.orientation,
    )
}

/// Advances the world by one control tick. Motion is clamped to the
/// configured per-tick limits and the tool scalar slews toward its command.
pub fn step(ws: &WorldState, action: &Action, cfg: &TaskConfig) -> WorldState {
    let mut next = ws.clone();
    next.tick += 1;
    let delta = action
        .delta
        .clamped(cfg.limits.max_translation, cfg.limits.max_rotation);
    next.ee_pose = compose(&ws.ee_pose, &delta);
    if cfg.task == TaskKind::VialAspiration {
        vial_contact(ws, &mut next, cfg);
    }

    let command = if action.gripper.is_finite() {
        action.gripper.clamp(0.0, 1.0)
    } else {
        ws.gripper
    };
    let rate = cfg.tool_rate();
    let prev_gripper = ws.gripper;
    next.gripper = prev_gripper + (command - prev_gripper).clamp(-rate, rate);

    match cfg.task {
        TaskKind::VialAspiration | TaskKind::LiquidTransfer => {
            let dv = (next.gripper - prev_gripper) * cfg.syringe().capacity;
            syringe_flow(&mut next, cfg, dv);
        }
        TaskKind::Unscrew => unscrew_step(&mut next, cfg, &ws.ee_pose, prev_gripper),
    }
    next
}

/// Observation of the state. Never exposes lid turn counts or progress.
pub fn observe(ws: &WorldState, cfg: &TaskConfig) -> Observation {
    let p = ws.ee_pose.position;
    let mut f = Vec::new();
    match cfg.task {
        TaskKind::VialAspiration => {
            let vial = ws.object(VIAL).expect("vial");
            let u = vial.pose.tool_z();
            let (depth, radial, align) = vial_relation(ws);
            f.extend((vial.pose.position - p).iter());
            f.extend(u.iter());
            f.extend(ws.ee_pose.tool_z().cross(&u).iter());
            f.extend([align, depth, radial, ws.flags.syringe_liquid / cfg.syringe().capacity]);
        }
        TaskKind::LiquidTransfer => {
            let t = cfg.transfer();
            let a = ws.object(CONTAINER_A).expect("container a");
            let b = ws.object(CONTAINER_B).expect("container b");
            f.extend((a.pose.position - p).iter());
            f.extend((b.pose.position - p).iter());
            f.push(ws.flags.syringe_liquid / cfg.syringe().capacity);
            f.push(ws.volume(CONTAINER_A) / t.a.volume.max(1e-9));
            f.push(ws.volume(CONTAINER_B) / t.success_volume);
        }
        TaskKind::Unscrew => {
            let lid = ws.object(LID).expect("lid");
            let table = ws.object(TABLE).expect("table");
            f.extend((lid.pose.position - p).iter());
            f.extend((table.pose.position - p).iter());
            f.extend(ws.ee_pose.tool_z().cross(&Vec3::z()).iter());
            f.push(if ws.is_held(LID) { 1.0 } else { 0.0 });
        }
    }
    Observation {
        ee_pose: ws.ee_pose,
        gripper: ws.gripper,
        task_features: f,
    }
}

pub fn success(ws: &WorldState, cfg: &TaskConfig) -> bool {
    match cfg.task {
        TaskKind::VialAspiration => {
            let v = cfg.vial();
            ws.flags.syringe_liquid >= v.fill_fraction * cfg.syringe().capacity && vial_tip_inside(ws, cfg)
        }
        TaskKind::LiquidTransfer => ws.volume(CONTAINER_B) >= cfg.transfer().success_volume,
        TaskKind::Unscrew => {
            if ws.flags.lifted_early || ws.held_object.is_some() {
                return false;
            }
            let u = cfg.unscrew();
            let lid = ws.lid().expect("lid");
            let place = ws.object(TABLE).expect("table").pose.position;
            let p = lid.pose.position;
            lid.mounted == Some(false)
                && p.z <= u.table_rest_z + 1e-9
                && (p.x - place.x).abs() <= u.place_half_extent
                && (p.y - place.y).abs() <= u.place_half_extent
        }
    }
}

/// Why an episode did not succeed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    LiftedEarly,
    Timeout,
}

impl FailureReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            FailureReason::LiftedEarly => "lifted_early",
            FailureReason::Timeout => "timeout",
        }
    }
}

/// Terminal classification of a state: `Some(Ok)` on success, `Some(Err)` on
/// an absorbing failure, `None` while the episode may continue.
pub fn terminal(ws: &WorldState, cfg: &TaskConfig) -> Option<Result<(), FailureReason>> {
    if success(ws, cfg) {
        Some(Ok(()))
    } else if ws.flags.lifted_early {
        Some(Err(FailureReason::LiftedEarly))
    } else if ws.tick >= cfg.max_ticks {
        Some(Err(FailureReason::Timeout))
    } else {
        None
    }
}
