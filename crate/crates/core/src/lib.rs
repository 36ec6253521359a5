//! Rotatable, polarization-reconfigurable antenna arrays for multi-user downlink.
//!
//! The crate models a base station whose antenna elements can each be rotated
//! in 3-D and whose transmit polarization state can be tuned, serving single
//! antenna users with reconfigurable receive polarization. It provides the
//! channel model, line-of-sight orientation analysis, SINR-constrained power
//! minimization, Riemannian optimizers for the orientation and polarization
//! variables, the alternating driver that ties them together, and a Monte-Carlo
//! harness.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ao;
pub mod beamforming;
pub mod channel;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod los;
pub mod manifold;
pub mod verify;

#[cfg(test)]
mod test_support;

pub use ao::{run_scheme, AoConfig, Scheme, SolutionState};
pub use channel::{
    assemble_channels, ChannelSet, CouplingMatrix, PatternParams, PolCombinerRx, PolStateTx,
    Propagation, Scene, C64,
};
pub use error::{Error, Result};
pub use geometry::{RotationMatrix, Vec3};
pub use harness::{generate_scene, run_sweep, SimConfig, SweepResult};
