//! Economic model predictive control for planar snake robot locomotion.
//!
//! The controller maximizes forward velocity directly over joint inputs,
//! without a prescribed gait. Recursive feasibility comes from a shifted
//! candidate completed by a joint-braking law; a lateral undulation
//! controller serves as the baseline.
//!
//! Modules, bottom-up:
//! - [`model`]: parameters, state and the discrete dynamics.
//! - [`gait`]: lateral undulation reference and PD controller.
//! - [`feasibility`]: braking law, stopping horizon, shifted candidate.
//! - [`ocp`]: rollout, cost, adjoint gradient, constraint margins.
//! - [`solver`]: augmented Lagrangian with projected gradient.
//! - [`empc`]: closed loops for the MPC and the baseline.
//! - [`monitor`]: empirical checks on velocity traces.
//! - [`harness`]: configuration, metrics and output files.

pub mod empc;
pub mod error;
pub mod feasibility;
pub mod gait;
pub mod harness;
pub mod model;
pub mod monitor;
pub mod ocp;
mod projection;
pub mod solver;
pub mod trace;

pub use error::{Error, Result};
