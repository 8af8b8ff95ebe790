//! Poses, pose deltas, axis masks and the operations the rest of the crate
//! builds on: composition, axis-lock projection and interpolation.
//!
//! Orientations are unit quaternions internally. Axis-angle vectors only
//! appear at the API boundary (`PoseDelta::rotation`). Rotation deltas are
//! expressed in the base frame: `compose` left-multiplies the orientation.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub type Vec3 = Vector3<f64>;
pub type Rotation = UnitQuaternion<f64>;

/// Re-normalizes a quaternion so its norm is 1 to machine precision.
pub fn renormalize(q: Rotation) -> Rotation {
    UnitQuaternion::new_normalize(q.into_inner())
}

/// 6-DoF end-effector pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec3,
    pub orientation: Rotation,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(position: Vec3, orientation: Rotation) -> Self {
        Self {
            position,
            orientation: renormalize(orientation),
        }
    }

    pub fn identity() -> Self {
        Self {
            position: Vec3::zeros(),
            orientation: Rotation::identity(),
        }
    }

    pub fn from_position(position: Vec3) -> Self {
        Self {
            position,
            orientation: Rotation::identity(),
        }
    }

    /// Tool z axis expressed in the base frame.
    pub fn tool_z(&self) -> Vec3 {
        self.orientation * Vec3::z()
    }

    /// Direction the tool points along (negative tool z). Straight down at
    /// identity orientation.
    pub fn approach(&self) -> Vec3 {
        -self.tool_z()
    }

    /// Angle in radians between this orientation and `other`.
    pub fn angle_to(&self, other: &Pose) -> f64 {
        self.orientation.angle_to(&other.orientation)
    }

    pub fn distance_to(&self, other: &Pose) -> f64 {
        (self.position - other.position).norm()
    }

    /// Pose delta that takes `self` to `target` under [`compose`].
    pub fn delta_to(&self, target: &Pose) -> PoseDelta {
        let rel = target.orientation * self.orientation.inverse();
        PoseDelta {
            translation: target.position - self.position,
            rotation: shortest(rel).scaled_axis(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite()) && self.orientation.coords.iter().all(|v| v.is_finite())
    }
}

/// Per-tick motion command: translation in meters, rotation as a base-frame
/// axis-angle vector in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PoseDelta {
    pub translation: Vec3,
    pub rotation: Vec3,
}

impl PoseDelta {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn new(translation: Vec3, rotation: Vec3) -> Self {
        Self { translation, rotation }
    }

    pub fn translation(translation: Vec3) -> Self {
        Self {
            translation,
            rotation: Vec3::zeros(),
        }
    }

    pub fn rotation(rotation: Vec3) -> Self {
        Self {
            translation: Vec3::zeros(),
            rotation,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.translation == Vec3::zeros() && self.rotation == Vec3::zeros()
    }

    pub fn is_finite(&self) -> bool {
        self.translation
            .iter()
            .chain(self.rotation.iter())
            .all(|v| v.is_finite())
    }

    /// Rotation magnitude is limited to half a turn per tick.
    pub fn is_valid(&self) -> bool {
        self.is_finite() && self.rotation.norm() <= PI + 1e-12
    }

    pub fn scaled(&self, translation_gain: f64, rotation_gain: f64) -> Self {
        Self {
            translation: self.translation * translation_gain,
            rotation: self.rotation * rotation_gain,
        }
    }

    /// Clamps translation and rotation norms to the given per-tick limits.
    pub fn clamped(&self, max_translation: f64, max_rotation: f64) -> Self {
        Self {
            translation: clamp_norm(self.translation, max_translation),
            rotation: clamp_norm(self.rotation, max_rotation),
        }
    }
}

pub fn clamp_norm(v: Vec3, max: f64) -> Vec3 {
    let n = v.norm();
    if n > max && n > 0.0 {
        v * (max / n)
    } else {
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    #[default]
    Base,
    Tool,
}

/// Axes ordered X, Y, Z, roll, pitch, yaw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct AxisMask {
    pub locked: [bool; 6],
    #[serde(default)]
    pub frame: Frame,
}

impl AxisMask {
    pub const AXIS_NAMES: [&'static str; 6] = ["x", "y", "z", "roll", "pitch", "yaw"];

    pub fn empty(frame: Frame) -> Self {
        Self {
            locked: [false; 6],
            frame,
        }
    }

    pub fn all_rotation(frame: Frame) -> Self {
        Self {
            locked: [false, false, false, true, true, true],
            frame,
        }
    }

    pub fn single(axis: usize, frame: Frame) -> Self {
        let mut locked = [false; 6];
        locked[axis] = true;
        Self { locked, frame }
    }

    /// Parses a list of axis names (`x`, `y`, `z`, `roll`, `pitch`, `yaw`).
    pub fn from_names<S: AsRef<str>>(names: &[S], frame: Frame) -> Option<Self> {
        let mut locked = [false; 6];
        for name in names {
            let idx = Self::AXIS_NAMES
                .iter()
                .position(|a| a.eq_ignore_ascii_case(name.as_ref()))?;
            locked[idx] = true;
        }
        Some(Self { locked, frame })
    }

    pub fn is_empty(&self) -> bool {
        !self.locked.iter().any(|&l| l)
    }

    pub fn translation_locked(&self) -> [bool; 3] {
        [self.locked[0], self.locked[1], self.locked[2]]
    }

    pub fn rotation_locked(&self) -> [bool; 3] {
        [self.locked[3], self.locked[4], self.locked[5]]
    }

    pub fn locked_names(&self) -> Vec<&'static str> {
        Self::AXIS_NAMES
            .iter()
            .zip(self.locked)
            .filter_map(|(n, l)| l.then_some(*n))
            .collect()
    }
}

/// Flips a quaternion into the hemisphere with non-negative scalar part.
fn shortest(q: Rotation) -> Rotation {
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

/// Twist of `q` about the unit `axis`: the rotation about that axis such
/// that `q = swing * twist` with the swing axis perpendicular to `axis`.
pub fn twist(q: &Rotation, axis: &Vec3) -> Rotation {
    let v = q.imag();
    let p = axis * v.dot(axis);
    let mut raw = Quaternion::new(q.w, p.x, p.y, p.z);
    // Canonical sign keeps swing/twist extraction exactly idempotent.
    if raw.w < 0.0 {
        raw = -raw;
    }
    let n = raw.norm();
    if n < 1e-12 {
        // Pure 180 degree swing: no twist component.
        return Rotation::identity();
    }
    renormalize(UnitQuaternion::new_unchecked(raw / n))
}

/// Removes the twist about `axis`, returning the swing.
pub fn swing(q: &Rotation, axis: &Vec3) -> Rotation {
    let t = twist(q, axis);
    renormalize(q * t.inverse())
}

/// Restricts a relative rotation to its unlocked axes.
///
/// One locked axis removes the twist about that axis. Two locked axes keep
/// only the twist about the remaining free axis. All three locked yields
/// the identity.
fn restrict_rotation(rel: &Rotation, locked: [bool; 3]) -> Rotation {
    let axes = [Vec3::x(), Vec3::y(), Vec3::z()];
    match locked.iter().filter(|&&l| l).count() {
        0 => *rel,
        3 => Rotation::identity(),
        1 => {
            let idx = locked.iter().position(|&l| l).unwrap();
            swing(rel, &axes[idx])
        }
        _ => {
            let free = locked.iter().position(|&l| !l).unwrap();
            twist(rel, &axes[free])
        }
    }
}

/// Pose advanced by a delta. Translation is added in the base frame and
/// the rotation vector left-multiplies the orientation.
pub fn compose(a: &Pose, d: &PoseDelta) -> Pose {
    let orientation = if d.rotation == Vec3::zeros() {
        // Leave the bits alone so held orientations stay exactly fixed.
        a.orientation
    } else {
        renormalize(Rotation::from_scaled_axis(d.rotation) * a.orientation)
    };
    Pose {
        position: a.position + d.translation,
        orientation,
    }
}

/// Projects `target` onto the subspace allowed by `mask`, anchored at the
/// pose captured when the lock was engaged.
///
/// Locked translational axes take the reference's coordinate (in the mask's
/// frame, where the tool frame is the reference's). Locked rotational axes
/// have their component of the relative rotation removed. Unlocked
/// components come from `target`. The projection is idempotent.
pub fn project_locked(target: &Pose, reference: &Pose, mask: &AxisMask) -> Pose {
    if mask.is_empty() {
        return *target;
    }
    let tl = mask.translation_locked();
    let position = match mask.frame {
        Frame::Base => {
            let mut p = target.position;
            for i in 0..3 {
                if tl[i] {
                    p[i] = reference.position[i];
                }
            }
            p
        }
        Frame::Tool => {
            let r = reference.orientation;
            let mut local = r.inverse() * (target.position - reference.position);
            if tl.iter().any(|&l| l) {
                for i in 0..3 {
                    if tl[i] {
                        local[i] = 0.0;
                    }
                }
                reference.position + r * local
            } else {
                target.position
            }
        }
    };

    let rl = mask.rotation_locked();
    let orientation = if !rl.iter().any(|&l| l) {
        target.orientation
    } else if rl.iter().all(|&l| l) {
        reference.orientation
    } else {
        match mask.frame {
            Frame::Base => {
                let rel = target.orientation * reference.orientation.inverse();
                renormalize(restrict_rotation(&rel, rl) * reference.orientation)
            }
            Frame::Tool => {
                let rel = reference.orientation.inverse() * target.orientation;
                renormalize(reference.orientation * restrict_rotation(&rel, rl))
            }
        }
    };
    Pose { position, orientation }
}

/// Delta form of [`project_locked`]: the command that moves `current` as
/// close to `compose(current, delta)` as the standing mask allows.
///
/// Unlocked base-frame translation components and, when no rotational
/// axis is locked, the rotation vector pass through untouched, so feeding
/// the result back in reproduces it bit for bit.
pub fn constrained_delta(current: &Pose, delta: &PoseDelta, reference: &Pose, mask: &AxisMask) -> PoseDelta {
    if mask.is_empty() {
        return *delta;
    }
    let target = compose(current, delta);
    let projected = project_locked(&target, reference, mask);

    let tl = mask.translation_locked();
    let translation = match mask.frame {
        Frame::Base => {
            let mut t = delta.translation;
            for i in 0..3 {
                if tl[i] {
                    t[i] = reference.position[i] - current.position[i];
                }
            }
            t
        }
        Frame::Tool if tl.iter().any(|&l| l) => projected.position - current.position,
        Frame::Tool => delta.translation,
    };

    let rl = mask.rotation_locked();
    let rotation = if !rl.iter().any(|&l| l) {
        delta.rotation
    } else {
        if projected.orientation == current.orientation {
            Vec3::zeros()
        } else {
            shortest(projected.orientation * current.orientation.inverse()).scaled_axis()
        }
    };
    PoseDelta { translation, rotation }
}

/// Linear position and shortest-arc spherical orientation interpolation.
pub fn interpolate(from: &Pose, to: &Pose, fraction: f64) -> Pose {
    let t = fraction.clamp(0.0, 1.0);
    if t == 0.0 {
        return *from;
    }
    if t == 1.0 {
        return *to;
    }
    let rel = shortest(from.orientation.inverse() * to.orientation);
    let step = Rotation::from_scaled_axis(rel.scaled_axis() * t);
    Pose {
        position: from.position + (to.position - from.position) * t,
        orientation: renormalize(from.orientation * step),
    }
}

/// Shortest rotation taking unit vector `from` onto unit vector `to`.
pub fn rotation_between(from: &Vec3, to: &Vec3) -> Rotation {
    match UnitQuaternion::rotation_between(from, to) {
        Some(q) => q,
        None => {
            // Antiparallel: any perpendicular axis works.
            let perp = if from.x.abs() < 0.9 {
                from.cross(&Vec3::x())
            } else {
                from.cross(&Vec3::y())
            };
            Rotation::from_axis_angle(&nalgebra::Unit::new_normalize(perp), PI)
        }
    }
}

/// Roll, pitch, yaw composed as `Rz(yaw) * Ry(pitch) * Rx(roll)`.
pub fn from_rpy(roll: f64, pitch: f64, yaw: f64) -> Rotation {
    Rotation::from_euler_angles(roll, pitch, yaw)
}
