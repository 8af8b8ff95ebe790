//! Controller traces against hand-computed expectations, then randomized
//! traces for the single-activity and zero-tick handback invariants.
//!
//! The routine is sized with dyadic numbers (period 1/8 s, 0.25 rad and
//! 1/32 m per tick) so the expected actions are exact in binary floating
//! point: two closing ticks, two quarter-radian turns, two lift ticks.

use crate::Check;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use tapbench_core::action::Action;
use tapbench_core::geometry::{compose, Frame, PoseDelta, Vec3};
use tapbench_core::sim::{reset, TaskKind, WorldState};
use tapbench_core::tap::{
    Controller, ControllerState, EmittedBy, TapCommand, TapDecision, TapLibrary, TapParams, TapSpec,
};

const PERIOD: f64 = 0.125;
const LOCK_X: usize = 0;
const UNLOCK: usize = 1;
const ROUTINE: usize = 2;
const WAYPOINT: usize = 3;

fn library() -> TapLibrary {
    let params: BTreeMap<String, f64> = [
        ("cycles", 0.0),
        ("grip_ticks", 2.0),
        ("angle_per_grab", 0.5),
        ("rotation_speed", 2.0),
        ("lift_height", 0.0625),
        ("lift_speed", 0.25),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    TapLibrary::new(vec![
        TapSpec {
            id: LOCK_X,
            name: "lock x axis".into(),
            priority: 1,
            params: TapParams::AxisLock {
                axes: vec!["x".into()],
                frame: Frame::Base,
            },
        },
        TapSpec {
            id: UNLOCK,
            name: "unlock axes".into(),
            priority: 2,
            params: TapParams::AxisUnlock,
        },
        TapSpec {
            id: ROUTINE,
            name: "execute routine unscrew".into(),
            priority: 3,
            params: TapParams::Routine {
                routine: "unscrew".into(),
                params,
            },
        },
        TapSpec {
            id: WAYPOINT,
            name: "go to waypoint a".into(),
            priority: 4,
            params: TapParams::Waypoint {
                position: [0.4, 0.0, 0.3],
                rpy: [0.0; 3],
                speed: 0.5,
                angular_speed: 2.0,
            },
        },
    ])
    .expect("test library")
}

/// A world with the EE at the identity orientation, so the routine turns
/// about base z.
fn world() -> WorldState {
    let mut ws = reset(&TaskKind::Unscrew.default_config());
    ws.ee_pose.orientation = tapbench_core::geometry::Rotation::identity();
    ws
}

/// Distinct, exactly representable incoming actions.
fn incoming(k: usize) -> Action {
    let s = (k + 1) as f64 / 1024.0;
    Action::new(PoseDelta::new(Vec3::new(s, -s, 2.0 * s), Vec3::new(0.0, 0.0, s)), 0.5)
}

fn routine_actions() -> Vec<Action> {
    let turn = Action::new(PoseDelta::rotation(Vec3::new(0.0, 0.0, 0.25)), 1.0);
    let lift = Action::new(PoseDelta::translation(Vec3::new(0.0, 0.0, 0.03125)), 1.0);
    vec![Action::hold(1.0), Action::hold(1.0), turn, turn, lift, lift]
}

#[derive(Debug, PartialEq)]
struct Step {
    action: Action,
    by: EmittedBy,
    decision: Option<TapDecision>,
    finished: Option<usize>,
}

fn run(commands: &[(usize, usize)], ticks: usize) -> Vec<Step> {
    let ctl = Controller::new(library(), PERIOD);
    let mut cs = ControllerState::default();
    let ws = world();
    (0..ticks)
        .map(|k| {
            let cmd = commands
                .iter()
                .find(|(t, _)| *t == k)
                .map_or(TapCommand::Empty, |&(_, id)| TapCommand::Tap(id));
            let out = ctl.tick(&mut cs, &ws, &incoming(k), cmd);
            Step {
                action: out.action,
                by: out.emitted_by,
                decision: out.decision,
                finished: out.finished,
            }
        })
        .collect()
}

fn incoming_step(k: usize) -> Step {
    Step {
        action: incoming(k),
        by: EmittedBy::Incoming,
        decision: None,
        finished: None,
    }
}

fn compare(name: &str, got: &[Step], expected: &[Step]) -> Result<(), String> {
    for (k, (g, e)) in got.iter().zip(expected).enumerate() {
        ensure!(g == e, "{name} trace differs at tick {k}: got {g:?}, expected {e:?}");
    }
    Ok(())
}

fn oracle_traces() -> Result<(), String> {
    // Idle: every incoming action passes through untouched.
    let idle: Vec<Step> = (0..6).map(incoming_step).collect();
    compare("idle-execute", &run(&[], 6), &idle)?;

    // Trigger at tick 2: six routine ticks, then the incoming action at tick 8.
    let r = routine_actions();
    let mut takeover: Vec<Step> = (0..2).map(incoming_step).collect();
    for (i, a) in r.iter().enumerate() {
        takeover.push(Step {
            action: *a,
            by: EmittedBy::Tap,
            decision: (i == 0).then_some(TapDecision::Accepted(ROUTINE)),
            finished: (i == r.len() - 1).then_some(ROUTINE),
        });
    }
    takeover.push(incoming_step(8));
    takeover.push(incoming_step(9));
    compare("trigger-takeover", &run(&[(2, ROUTINE)], 10), &takeover)?;

    // A lock requested mid-routine is discarded and never installed.
    let mut discard = takeover;
    discard[4].decision = Some(TapDecision::Discarded(LOCK_X));
    compare(
        "discard-during-active",
        &run(&[(2, ROUTINE), (4, LOCK_X)], 10),
        &discard,
    )?;
    Ok(())
}

fn fuzz(traces: usize) -> Result<(usize, usize), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0);
    let lib = library();
    let ctl = Controller::new(lib.clone(), PERIOD);
    let mut handbacks = 0;
    let mut discards = 0;
    for trace in 0..traces {
        let mut cs = ControllerState::default();
        let mut ws = world();
        let mut finished_last = false;
        for tick in 0..rng.random_range(20..120) {
            let cmd = if rng.random_bool(0.2) {
                TapCommand::Tap(rng.random_range(0..lib.len() + 1))
            } else {
                TapCommand::Empty
            };
            let r = rng.random_range(-0.01..0.01);
            let act = Action::new(
                PoseDelta::new(Vec3::new(r, 0.5 * r, -r), Vec3::new(0.0, r, 0.0)),
                rng.random_range(0.0..1.0),
            );
            let before = cs.active;
            let out = ctl.tick(&mut cs, &ws, &act, cmd);
            let at = format!("trace {trace} tick {tick}");

            // Single activity: a running TAP is never replaced.
            if let (Some(running), TapCommand::Tap(id)) = (before, cmd) {
                if lib.get(id).is_some() {
                    ensure!(
                        out.decision == Some(TapDecision::Discarded(id)),
                        "{at}: request during TAP {running} was {:?}",
                        out.decision
                    );
                    discards += 1;
                }
            }
            if let Some(running) = before {
                ensure!(
                    out.emitted_by == EmittedBy::Tap,
                    "{at}: incoming action leaked into TAP {running}"
                );
                ensure!(
                    cs.active.is_none() || cs.active == before,
                    "{at}: active TAP changed from {running}"
                );
            }
            ensure!(
                cs.active.is_none() || cs.progress.is_some(),
                "{at}: active TAP without progress"
            );

            // Zero-tick handback: the tick after a finish executes the incoming action.
            if finished_last && cmd == TapCommand::Empty {
                ensure!(
                    out.emitted_by == EmittedBy::Incoming,
                    "{at}: controller held on after finishing"
                );
                if cs.active_mask.is_none() {
                    ensure!(out.action == act, "{at}: incoming action altered without a lock");
                }
                handbacks += 1;
            }
            finished_last = out.finished.is_some();
            ws.ee_pose = compose(&ws.ee_pose, &out.action.delta);
            ws.gripper = out.action.gripper;
        }
    }
    Ok((handbacks, discards))
}

pub fn check() -> Check {
    oracle_traces()?;
    let (handbacks, discards) = fuzz(1000)?;
    ensure!(
        handbacks > 0 && discards > 0,
        "fuzzing never exercised handback ({handbacks}) or discard ({discards})"
    );
    Ok(format!(
        "3 oracle traces match exactly; 1000 fuzz traces with {handbacks} handbacks and {discards} discarded requests"
    ))
}
