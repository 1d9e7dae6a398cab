//! Tethered-UAV dynamics, backstepping control and a barrier-function QP
//! safety filter that keeps the vehicle inside the tether sphere.

pub mod config;
pub mod control;
pub mod dynamics;
pub mod manifest;
pub mod output;
pub mod qp;
pub mod safety;
pub mod sim;
pub mod suite;

/// The simulator is deterministic; nothing in the library draws random
/// numbers. `--seedless` asserts this.
pub const USES_RNG: bool = false;
