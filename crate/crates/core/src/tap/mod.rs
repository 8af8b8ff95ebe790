//! Teleoperation augmentation primitives: the library, their per-tick
//! expansions, and the controller that arbitrates them against incoming
//! actions.

pub mod controller;
pub mod library;
pub mod routine;
pub mod waypoint;

pub use controller::{Controller, ControllerState, EmittedBy, TapDecision, TapProgress, TickOutput};
pub use library::{TapCommand, TapKind, TapLibrary, TapParams, TapSpec};
pub use routine::{routine_plan, routine_trajectory, RoutinePlan, RoutineStep};
pub use waypoint::waypoint_step;
