//! Command-line workflow and the operator bridge server.

pub mod bridge;
pub mod protocol;
pub mod server;
