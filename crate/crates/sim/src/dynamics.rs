//! First-order planar kinematics of the vehicle.

use pvrow_core::follower::VelocityCommand;
use pvrow_core::scalar::wrap_angle;
use pvrow_core::{Pose, Vec2};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UavParams {
    /// Velocity time constant, seconds.
    pub tau: f64,
    pub max_speed: f64,
    /// Yaw rate bound, rad/s.
    pub max_yaw_rate: f64,
}

impl Default for UavParams {
    fn default() -> Self {
        Self { tau: 0.5, max_speed: 1.0, max_yaw_rate: 0.5 }
    }
}

/// True vehicle state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UavState {
    pub pose: Pose,
    /// World-frame velocity, m/s.
    pub velocity: Vec2<f64>,
    pub params: UavParams,
}

impl UavState {
    pub fn at_rest(pose: Pose, params: UavParams) -> Self {
        Self { pose, velocity: Vec2::zero(), params }
    }

    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }
}

/// Body-frame velocity set point and an optional heading set point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UavCommand {
    pub velocity: VelocityCommand<f64>,
    pub heading: Option<f64>,
}

/// Advances the state by `dt` seconds.
///
/// The velocity relaxes exponentially towards the command (rotated into the
/// world frame with the current yaw and limited to `max_speed`), the
/// position integrates that response exactly, and the yaw turns towards the
/// heading set point at the bounded rate.
pub fn step_dynamics(s: &UavState, cmd: &UavCommand, dt: f64) -> UavState {
    assert!(dt > 0.0, "time step must be positive");
    let p = s.params;
    let c = cmd.velocity.clamped(p.max_speed);
    let target = s.pose.rotate_to_world(Vec2::new(c.vx, c.vy));
    let decay = if p.tau > 0.0 { (-dt / p.tau).exp() } else { 0.0 };
    let gap = s.velocity - target;
    let velocity = target + gap.scale(decay);
    let moved = target.scale(dt) + gap.scale(p.tau * (1.0 - decay));
    let velocity = if velocity.norm() > p.max_speed { velocity.scale(p.max_speed / velocity.norm()) } else { velocity };
    let theta = match cmd.heading {
        Some(h) => {
            let err = wrap_angle(h - s.pose.theta);
            let step = p.max_yaw_rate * dt;
            s.pose.theta + err.clamp(-step, step)
        }
        None => s.pose.theta,
    };
    let pose = Pose::new(s.pose.x + moved.x, s.pose.y + moved.y, theta, s.pose.z_g);
    UavState { pose, velocity, params: p }
}
