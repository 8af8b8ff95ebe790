use crate::error::{Error, Result};
use crate::geometry::{from_rpy, AxisMask, Frame, Pose, Vec3};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TapKind {
    AxisLock,
    AxisUnlock,
    Waypoint,
    Routine,
}

/// Kind-specific TAP parameters as they appear in task config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TapParams {
    AxisLock {
        axes: Vec<String>,
        #[serde(default)]
        frame: Frame,
    },
    AxisUnlock,
    Waypoint {
        position: [f64; 3],
        #[serde(default)]
        rpy: [f64; 3],
        /// Travel speed in m/s.
        speed: f64,
        /// Travel speed in rad/s.
        angular_speed: f64,
    },
    Routine {
        routine: String,
        #[serde(default)]
        params: BTreeMap<String, f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapSpec {
    pub id: usize,
    pub name: String,
    /// Higher wins when several TAPs are requested on the same tick.
    pub priority: i32,
    #[serde(flatten)]
    pub params: TapParams,
}

impl TapSpec {
    pub fn kind(&self) -> TapKind {
        match self.params {
            TapParams::AxisLock { .. } => TapKind::AxisLock,
            TapParams::AxisUnlock => TapKind::AxisUnlock,
            TapParams::Waypoint { .. } => TapKind::Waypoint,
            TapParams::Routine { .. } => TapKind::Routine,
        }
    }

    /// Whether the TAP occupies the controller over several ticks.
    pub fn is_durative(&self) -> bool {
        matches!(self.kind(), TapKind::Waypoint | TapKind::Routine)
    }

    pub fn mask(&self) -> Option<AxisMask> {
        match &self.params {
            TapParams::AxisLock { axes, frame } => AxisMask::from_names(axes, *frame),
            _ => None,
        }
    }

    pub fn waypoint_pose(&self) -> Option<Pose> {
        match &self.params {
            TapParams::Waypoint { position, rpy, .. } => {
                Some(Pose::new(Vec3::from(*position), from_rpy(rpy[0], rpy[1], rpy[2])))
            }
            _ => None,
        }
    }
}

/// Either no TAP, or a reference into the library in force.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TapCommand {
    #[default]
    Empty,
    Tap(usize),
}

impl TapCommand {
    pub fn is_empty(&self) -> bool {
        matches!(self, TapCommand::Empty)
    }

    pub fn id(&self) -> Option<usize> {
        match self {
            TapCommand::Empty => None,
            TapCommand::Tap(id) => Some(*id),
        }
    }
}

/// The TAPs available for a task, indexed by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TapLibrary {
    taps: Vec<TapSpec>,
}

impl TapLibrary {
    /// Validates id contiguity, unique names and unique priorities, and
    /// that kind-specific parameters are well formed.
    pub fn new(taps: Vec<TapSpec>) -> Result<Self> {
        for (i, tap) in taps.iter().enumerate() {
            if tap.id != i {
                return Err(Error::Config(format!(
                    "TAP ids must be contiguous from 0: `{}` has id {} at position {}",
                    tap.name, tap.id, i
                )));
            }
            if taps[..i].iter().any(|t| t.priority == tap.priority) {
                return Err(Error::Config(format!(
                    "duplicate TAP priority {} (`{}`)",
                    tap.priority, tap.name
                )));
            }
            if taps[..i].iter().any(|t| t.name == tap.name) {
                return Err(Error::Config(format!("duplicate TAP name `{}`", tap.name)));
            }
            match &tap.params {
                TapParams::AxisLock { axes, .. } => {
                    if tap.mask().is_none() || axes.is_empty() {
                        return Err(Error::Config(format!(
                            "TAP `{}`: axes must be a non-empty subset of x, y, z, roll, pitch, yaw",
                            tap.name
                        )));
                    }
                }
                TapParams::Waypoint {
                    speed,
                    angular_speed,
                    position,
                    rpy,
                } => {
                    if !(*speed > 0.0 && *angular_speed > 0.0) || position.iter().chain(rpy).any(|v| !v.is_finite()) {
                        return Err(Error::Config(format!(
                            "TAP `{}`: waypoint needs finite pose and positive speeds",
                            tap.name
                        )));
                    }
                }
                TapParams::Routine { routine, params } => {
                    crate::tap::routine::RoutineParams::from_map(routine, params)
                        .map_err(|e| Error::Config(format!("TAP `{}`: {e}", tap.name)))?;
                }
                TapParams::AxisUnlock => {}
            }
        }
        Ok(Self { taps })
    }

    pub fn get(&self, id: usize) -> Option<&TapSpec> {
        self.taps.get(id)
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TapSpec> {
        self.taps.iter()
    }

    pub fn by_name(&self, name: &str) -> Option<&TapSpec> {
        self.taps.iter().find(|t| t.name.eq_ignore_ascii_case(name))
    }

    pub fn names(&self) -> Vec<String> {
        self.taps.iter().map(|t| t.name.clone()).collect()
    }

    /// Looks a name up, failing with the list of valid names.
    pub fn require(&self, name: &str) -> Result<&TapSpec> {
        self.by_name(name).ok_or_else(|| Error::UnknownName {
            name: name.to_string(),
            valid: self.names(),
        })
    }

    /// First TAP of the given kind, in id order.
    pub fn first_of(&self, kind: TapKind) -> Option<&TapSpec> {
        self.taps.iter().find(|t| t.kind() == kind)
    }

    /// Picks the highest-priority non-empty command; all-empty gives Empty.
    /// Commands naming ids outside the library are ignored.
    pub fn resolve_simultaneous(&self, taps: &[TapCommand]) -> TapCommand {
        taps.iter()
            .filter_map(|c| c.id().and_then(|id| self.get(id)))
            .max_by_key(|spec| spec.priority)
            .map(|spec| TapCommand::Tap(spec.id))
            .unwrap_or(TapCommand::Empty)
    }
}
