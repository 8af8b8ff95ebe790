use crate::action::Action;
use crate::error::{Error, Result};
use crate::geometry::{interpolate, Pose};
use crate::tap::library::{TapParams, TapSpec};

/// Arrival tolerances for waypoint motion.
pub const POSITION_TOLERANCE: f64 = 1e-3;
pub const ANGLE_TOLERANCE: f64 = 0.01;

/// One bounded-speed step along the interpolation path toward the
/// waypoint. `finished` is true once the step lands within tolerance, so the
/// tick after a finishing step belongs to the policy again.
pub fn waypoint_step(spec: &TapSpec, current: &Pose, gripper: f64, control_period: f64) -> Result<(Action, bool)> {
    let TapParams::Waypoint {
        speed, angular_speed, ..
    } = &spec.params
    else {
        return Err(Error::Usage(format!("TAP `{}` is not a waypoint", spec.name)));
    };
    let target = spec.waypoint_pose().expect("waypoint pose");
    let distance = current.distance_to(&target);
    let angle = current.angle_to(&target);

    if distance == 0.0 && angle == 0.0 {
        return Ok((Action::hold(gripper), true));
    }

    let max_linear = speed * control_period;
    let max_angular = angular_speed * control_period;
    let mut fraction: f64 = 1.0;
    if distance > 0.0 {
        fraction = fraction.min(max_linear / distance);
    }
    if angle > 0.0 {
        fraction = fraction.min(max_angular / angle);
    }
    let next = interpolate(current, &target, fraction);
    let finished = next.distance_to(&target) <= POSITION_TOLERANCE && next.angle_to(&target) <= ANGLE_TOLERANCE;
    Ok((Action::new(current.delta_to(&next), gripper), finished))
}
