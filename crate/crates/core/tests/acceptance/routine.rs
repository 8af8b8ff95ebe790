//! Unscrew routine: step order for several cycle counts, repeatability, and
//! independence from the world while it runs.

use crate::Check;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tapbench_core::geometry::{Pose, Vec3};
use tapbench_core::sim::{reset, TaskKind, LID};
use tapbench_core::tap::{
    routine_plan, Controller, ControllerState, EmittedBy, RoutineStep, TapCommand, TapParams, TapSpec,
};

/// close gripper, rotate counter-clockwise, open gripper, rotate clockwise,
/// repeated, then close, rotate counter-clockwise, move straight up.
fn expected_order(cycles: u32) -> Vec<RoutineStep> {
    use RoutineStep::*;
    let mut v = Vec::new();
    for _ in 0..cycles {
        v.extend([Close, RotateCcw, Open, RotateCw]);
    }
    v.extend([Close, RotateCcw, Lift]);
    v
}

fn with_cycles(spec: &TapSpec, cycles: u32) -> TapSpec {
    let mut s = spec.clone();
    if let TapParams::Routine { params, .. } = &mut s.params {
        params.insert("cycles".into(), cycles as f64);
    }
    s
}

pub fn check() -> Check {
    let cfg = TaskKind::Unscrew.default_config();
    let lib = cfg.library();
    let base = lib
        .require("execute routine unscrew")
        .map_err(|e| e.to_string())?
        .clone();
    let ws0 = reset(&cfg);
    let start = ws0.ee_pose;

    for cycles in [0, 1, 3] {
        let spec = with_cycles(&base, cycles);
        let plan = routine_plan(&spec, &start, cfg.control_period).map_err(|e| e.to_string())?;
        ensure!(
            plan.executed_steps() == expected_order(cycles),
            "cycles {cycles}: order {:?}",
            plan.executed_steps()
        );
        // Rotation sense and gripper state per step.
        let axis = start.tool_z();
        for (a, &s) in plan.actions.iter().zip(&plan.step_of_tick) {
            let about = a.delta.rotation.dot(&axis);
            let ok = match plan.steps[s] {
                RoutineStep::Close => a.gripper == 1.0 && a.delta.is_zero(),
                RoutineStep::Open => a.gripper == 0.0 && a.delta.is_zero(),
                RoutineStep::RotateCcw => a.gripper == 1.0 && about > 0.0,
                RoutineStep::RotateCw => a.gripper == 0.0 && about < 0.0,
                RoutineStep::Lift => {
                    a.gripper == 1.0 && a.delta.translation.z > 0.0 && a.delta.rotation == Vec3::zeros()
                }
            };
            ensure!(
                ok,
                "cycles {cycles}: action {a:?} does not fit step {:?}",
                plan.steps[s]
            );
        }
        let again = routine_plan(&spec, &start, cfg.control_period).map_err(|e| e.to_string())?;
        ensure!(again == plan, "cycles {cycles}: expansion is not repeatable");
    }

    // Mid-routine perturbation: the emitted actions follow the plan fixed at
    // trigger time whatever happens to the world.
    let ctl = Controller::new(lib.clone(), cfg.control_period);
    let plan = routine_plan(&base, &start, cfg.control_period).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..50 {
        let mut cs = ControllerState::default();
        let mut ws = ws0.clone();
        let mut emitted = Vec::new();
        let mut cmd = TapCommand::Tap(base.id);
        for _ in 0..plan.len() {
            let out = ctl.tick(&mut cs, &ws, &Default::default(), cmd);
            ensure!(
                out.emitted_by == EmittedBy::Tap,
                "trial {trial}: routine lost control early"
            );
            emitted.push(out.action);
            cmd = TapCommand::Empty;
            let jolt = Vec3::new(
                rng.random_range(-0.1..0.1),
                rng.random_range(-0.1..0.1),
                rng.random_range(-0.1..0.1),
            );
            ws.ee_pose = Pose::new(ws.ee_pose.position + jolt, ws.ee_pose.orientation);
            ws.gripper = rng.random_range(0.0..1.0);
            for o in ws.objects.iter_mut().filter(|o| o.id == LID) {
                o.pose.position += jolt;
                o.remaining_turns = Some(rng.random_range(0..5));
            }
        }
        ensure!(
            emitted == plan.actions,
            "trial {trial}: perturbation changed the emitted actions"
        );
        ensure!(!cs.is_busy(), "trial {trial}: routine did not finish on schedule");
    }
    Ok(format!(
        "order matches for cycles 0, 1, 3; expansion repeatable; 50 perturbed runs emit the {}-tick plan unchanged",
        plan.len()
    ))
}
