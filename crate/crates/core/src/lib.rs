//! Hybrid denoising policies that trigger teleoperation augmentation
//! primitives (axis locks, perching waypoints, open-loop routines), with a
//! simulated three-task benchmark to compare them against a TAP-free
//! baseline.

pub mod action;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod policy;
pub mod runtime;
pub mod sim;
pub mod tap;
pub mod teleop;

pub use action::Action;
pub use error::{Error, Result};
