//! Learning-supported tracking control for a 7-joint manipulator.
//!
//! Six uncoupled Gaussian processes forecast a quasi-periodic 6-DOF target
//! motion over the controller horizon ([`reference`]), closed-loop inverse
//! kinematics maps the forecast to joint references ([`kinematics`]) and a
//! condensed tracking MPC drives a double-integrator joint model ([`mpc`]).
//! [`sim`] closes the loop in deterministic virtual time.

pub mod gp;
pub mod kinematics;
pub mod mpc;
pub mod reference;
pub mod sim;

pub use gp::{GpError, KernelSpec, TrainedGp, TrainingSet};
pub use kinematics::{DhTable, IkConfig, KinematicsError, PoseEuler};
pub use mpc::{Bounds, LtiModel, MpcError, MpcSolution, MpcWeights};
pub use reference::{
    ChannelModel, ObservationWindow, PoseSample, ReferenceError, ReferencePrediction,
};
pub use sim::{Metrics, SimConfig, SimError, SimLog};

/// Number of robot joints.
pub const N_JOINTS: usize = 7;
/// Pose channels: x, y, z, roll, pitch, yaw.
pub const N_CHANNELS: usize = 6;

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}
