//! Lock projection on randomized poses and masks.
//!
//! Substitution paths (translations, full rotation locks, empty masks) are
//! held to 1e-9; partial rotation locks go through swing/twist and are held
//! to 1e-6. Locked components are checked directly: base-frame coordinates
//! against the reference, tool-frame offsets in the reference frame, and
//! the relative rotation's quaternion components about locked axes.

use crate::Check;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use tapbench_core::geometry::{project_locked, AxisMask, Frame, Pose, Rotation, Vec3};

const CASES: usize = 10_000;
const EXACT: f64 = 1e-9;
const SWING_TWIST: f64 = 1e-6;

fn pose(rng: &mut ChaCha8Rng) -> Pose {
    let p = Vec3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
    let q = nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]);
    Pose::new(p, Rotation::from_quaternion(q))
}

fn mask(rng: &mut ChaCha8Rng) -> AxisMask {
    AxisMask {
        locked: std::array::from_fn(|_| rng.random_bool(0.5)),
        frame: if rng.random_bool(0.5) { Frame::Base } else { Frame::Tool },
    }
}

fn gap(a: &Pose, b: &Pose) -> (f64, f64) {
    ((a.position - b.position).norm(), a.angle_to(b))
}

pub fn check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e0);
    let mut worst_exact = 0.0f64;
    let mut worst_swing = 0.0f64;
    for case in 0..CASES {
        let (target, reference, m) = (pose(&mut rng), pose(&mut rng), mask(&mut rng));
        let rl = m.rotation_locked();
        let partial = rl.iter().any(|&l| l) && !rl.iter().all(|&l| l);

        // Idempotence.
        let once = project_locked(&target, &reference, &m);
        let twice = project_locked(&once, &reference, &m);
        let (dp, da) = gap(&once, &twice);
        worst_exact = worst_exact.max(dp);
        let angle_tol = if partial { SWING_TWIST } else { EXACT };
        ensure!(dp <= EXACT, "case {case}: idempotence moved the position by {dp:e}");
        ensure!(
            da <= angle_tol,
            "case {case}: idempotence turned the orientation by {da:e}"
        );
        if partial {
            worst_swing = worst_swing.max(da);
        } else {
            worst_exact = worst_exact.max(da);
        }

        // Locked translations hold the reference coordinate.
        let tl = m.translation_locked();
        let offset = match m.frame {
            Frame::Base => once.position - reference.position,
            Frame::Tool => reference.orientation.inverse() * (once.position - reference.position),
        };
        for k in (0..3).filter(|&k| tl[k]) {
            ensure!(
                offset[k].abs() <= EXACT,
                "case {case}: locked axis {k} drifted by {:e}",
                offset[k]
            );
        }
        if m.frame == Frame::Base {
            for k in (0..3).filter(|&k| !tl[k]) {
                ensure!(
                    once.position[k] == target.position[k],
                    "case {case}: free axis {k} was altered"
                );
            }
        }

        // Locked rotations leave no component about their axis.
        let rel = match m.frame {
            Frame::Base => once.orientation * reference.orientation.inverse(),
            Frame::Tool => reference.orientation.inverse() * once.orientation,
        };
        for k in (0..3).filter(|&k| rl[k]) {
            let c = rel.imag()[k].abs();
            worst_swing = worst_swing.max(c);
            ensure!(
                c <= SWING_TWIST,
                "case {case}: locked rotation axis {k} keeps component {c:e}"
            );
        }

        // Empty mask is the identity.
        let free = project_locked(&target, &reference, &AxisMask::empty(m.frame));
        ensure!(free == target, "case {case}: empty mask changed the pose");

        // All rotations locked freezes the reference orientation.
        let mut frozen = m;
        frozen.locked[3..].copy_from_slice(&[true; 3]);
        let f = project_locked(&target, &reference, &frozen);
        let fa = f.orientation.angle_to(&reference.orientation);
        worst_exact = worst_exact.max(fa);
        ensure!(fa <= EXACT, "case {case}: full rotation lock left {fa:e} rad");
    }
    Ok(format!(
        "{CASES} cases; worst substitution error {worst_exact:.1e} (tol {EXACT:e}), worst swing/twist error {worst_swing:.1e} (tol {SWING_TWIST:e})"
    ))
}
