use proptest::prelude::*;
use tapbench_core::geometry::{
    compose, constrained_delta, from_rpy, interpolate, project_locked, swing, twist, AxisMask, Frame, Pose, PoseDelta,
    Vec3,
};

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    [-r..r, -r..r, -r..r].prop_map(|v| Vec3::new(v[0], v[1], v[2]))
}

fn pose() -> impl Strategy<Value = Pose> {
    (vec3(1.0), vec3(3.0)).prop_map(|(p, rpy)| Pose::new(p, from_rpy(rpy.x, rpy.y, rpy.z)))
}

fn mask() -> impl Strategy<Value = AxisMask> {
    (proptest::array::uniform6(any::<bool>()), any::<bool>()).prop_map(|(locked, tool)| AxisMask {
        locked,
        frame: if tool { Frame::Tool } else { Frame::Base },
    })
}

proptest! {
    #[test]
    fn zero_delta_is_identity(p in pose()) {
        let q = compose(&p, &PoseDelta::zero());
        prop_assert!((q.position - p.position).norm() == 0.0);
        prop_assert!(q.angle_to(&p) < 1e-12);
    }

    #[test]
    fn delta_to_then_compose_reaches_target(a in pose(), b in pose()) {
        let c = compose(&a, &a.delta_to(&b));
        prop_assert!(c.distance_to(&b) < 1e-9);
        prop_assert!(c.angle_to(&b) < 1e-6);
    }

    #[test]
    fn projection_is_idempotent(t in pose(), r in pose(), m in mask()) {
        let once = project_locked(&t, &r, &m);
        let twice = project_locked(&once, &r, &m);
        prop_assert!(once.distance_to(&twice) < 1e-9);
        prop_assert!(once.angle_to(&twice) < 1e-6);
    }

    #[test]
    fn constrained_delta_lands_on_projection(cur in pose(), d in (vec3(0.05), vec3(0.3)), r in pose(), m in mask()) {
        let delta = PoseDelta::new(d.0, d.1);
        let got = compose(&cur, &constrained_delta(&cur, &delta, &r, &m));
        let want = project_locked(&compose(&cur, &delta), &r, &m);
        prop_assert!(got.distance_to(&want) < 1e-9);
        prop_assert!(got.angle_to(&want) < 1e-6);
    }

    #[test]
    fn swing_twist_recompose(rpy in vec3(3.0), axis in vec3(1.0)) {
        prop_assume!(axis.norm() > 1e-3);
        let axis = axis.normalize();
        let q = from_rpy(rpy.x, rpy.y, rpy.z);
        let (s, t) = (swing(&q, &axis), twist(&q, &axis));
        prop_assert!((s * t).angle_to(&q) < 1e-9);
        prop_assert!(t.imag().cross(&axis).norm() < 1e-9);
        prop_assert!(s.imag().dot(&axis).abs() < 1e-9);
    }

    #[test]
    fn interpolation_hits_endpoints_and_stays_between(a in pose(), b in pose(), f in 0.0..1.0f64) {
        prop_assert_eq!(interpolate(&a, &b, 0.0), a);
        prop_assert_eq!(interpolate(&a, &b, 1.0), b);
        let m = interpolate(&a, &b, f);
        let total = a.distance_to(&b);
        prop_assert!(a.distance_to(&m) <= total + 1e-12 && m.distance_to(&b) <= total + 1e-12);
        prop_assert!(a.angle_to(&m) <= a.angle_to(&b) + 1e-9);
    }
}
