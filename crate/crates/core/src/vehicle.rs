//! Kinematic bicycle plant with actuator limits.

use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_angle, Pose2D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VehicleParams {
    pub wheelbase: f64,
    pub max_steer: f64,
    /// Steering slew limit, rad/s.
    pub steer_rate: f64,
    /// First-order speed lag time constant, s.
    pub speed_tau: f64,
    pub max_speed: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self { wheelbase: 1.55, max_steer: 0.4, steer_rate: 3.0, speed_tau: 0.4, max_speed: 20.0 }
    }
}

impl VehicleParams {
    pub fn min_turn_radius(&self) -> f64 {
        self.wheelbase / self.max_steer.tan()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub pose: Pose2D,
    /// Longitudinal speed, m/s (never negative).
    pub v: f64,
    /// Yaw rate, rad/s.
    pub omega: f64,
    /// Longitudinal acceleration, m/s².
    pub a: f64,
    /// Front steering angle, rad.
    pub steer: f64,
}

impl VehicleState {
    pub fn at_rest(pose: Pose2D) -> Self {
        Self { pose, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlCommand {
    pub steer: f64,
    pub target_speed: f64,
}

impl ControlCommand {
    pub fn stop() -> Self {
        Self { steer: 0.0, target_speed: 0.0 }
    }
}

/// Largest single integration step; longer steps are split.
pub const MAX_SUBSTEP: f64 = 0.05;

/// Advance the plant by `dt` seconds.
///
/// Commands are clamped to actuator limits. Speed follows the target through a
/// first-order lag, steering slews at most `steer_rate`, then the pose moves
/// along the exact constant-curvature arc for the updated speed and steer.
pub fn step_vehicle(state: &VehicleState, cmd: &ControlCommand, dt: f64, params: &VehicleParams) -> VehicleState {
    assert!(dt > 0.0 && dt.is_finite(), "step_vehicle: dt must be positive, got {dt}");
    let substeps = (dt / MAX_SUBSTEP).ceil().max(1.0) as usize;
    let h = dt / substeps as f64;
    let mut s = *state;
    for _ in 0..substeps {
        s = substep(&s, cmd, h, params);
    }
    s
}

fn substep(state: &VehicleState, cmd: &ControlCommand, dt: f64, params: &VehicleParams) -> VehicleState {
    let steer_cmd = cmd.steer.clamp(-params.max_steer, params.max_steer);
    let max_delta = params.steer_rate * dt;
    let steer = (state.steer + (steer_cmd - state.steer).clamp(-max_delta, max_delta))
        .clamp(-params.max_steer, params.max_steer);

    let target = cmd.target_speed.clamp(0.0, params.max_speed);
    // exact discretization of the first-order lag
    let alpha = 1.0 - (-dt / params.speed_tau).exp();
    let v = (state.v + (target - state.v) * alpha).max(0.0);
    let a = (v - state.v) / dt;

    let omega = v * steer.tan() / params.wheelbase;
    let p = state.pose;
    let (x, y) = if omega.abs() < 1e-12 {
        (p.x + v * p.theta.cos() * dt, p.y + v * p.theta.sin() * dt)
    } else {
        let r = v / omega;
        let th1 = p.theta + omega * dt;
        (p.x + r * (th1.sin() - p.theta.sin()), p.y - r * (th1.cos() - p.theta.cos()))
    };
    VehicleState {
        pose: Pose2D { x, y, theta: normalize_angle(p.theta + omega * dt) },
        v,
        omega,
        a,
        steer,
    }
}
