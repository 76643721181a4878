//! Planar rigid-body dynamics of the brake-steered robot.
//!
//! The robot is driven by a single omni wheel that pushes along the body
//! axis `x_r` through the center of mass `G`, and steered by two ON/OFF
//! brakes on a pair of conventional wheels mounted `brake_x` ahead of `G`.
//! The conventional wheels forbid lateral slip of their axle midpoint, which
//! ties the lateral body velocity to the yaw rate:
//!
//! ```text
//! y_r' = -brake_x * theta'
//! ```
//!
//! Because of that constraint the state only carries the two independent
//! velocities (`v_xr`, `omega`); the lateral one is always derived.
//!
//! Everything here is a pure function of its arguments.

use nalgebra::{Matrix3, Vector2};
use serde::{Deserialize, Serialize};

/// Which of the two brakes. `Left` is brake 1 (positive lateral offset),
/// `Right` is brake 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Brake {
    Left,
    Right,
}

impl Brake {
    pub const BOTH: [Brake; 2] = [Brake::Left, Brake::Right];

    fn index(self) -> usize {
        match self {
            Brake::Left => 0,
            Brake::Right => 1,
        }
    }
}

/// Physical parameters of the robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotParams {
    /// kg
    pub mass: f64,
    /// Moment of inertia about the center of mass, kg·m².
    pub inertia: f64,
    /// m/s²
    pub gravity: f64,
    /// Kinetic friction coefficient of `[left, right]` brake.
    pub mu_k: [f64; 2],
    /// Longitudinal offset of both brakes (and of the constrained axle) ahead of G, m.
    pub brake_x: f64,
    /// Lateral offsets `[left, right]`, m. Left must be positive, right negative.
    pub brake_y: [f64; 2],
    /// Slip speeds below this floor are treated as this value when
    /// normalizing the friction direction, m/s.
    pub slip_regularization: f64,
}

impl Default for RobotParams {
    fn default() -> Self {
        Self {
            mass: 6.8,
            inertia: 1.0,
            gravity: 9.81,
            mu_k: [0.46, 0.46],
            brake_x: 0.93,
            brake_y: [0.155, -0.155],
            slip_regularization: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid robot parameter `{field}`: {reason}")]
pub struct ParamError {
    pub field: &'static str,
    pub reason: &'static str,
}

impl RobotParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        let positive = |field, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ParamError { field, reason: "must be finite and > 0" })
            }
        };
        positive("mass", self.mass)?;
        positive("inertia", self.inertia)?;
        positive("gravity", self.gravity)?;
        positive("brake_x", self.brake_x)?;
        positive("slip_regularization", self.slip_regularization)?;
        if self.mu_k.iter().any(|mu| !mu.is_finite() || *mu < 0.0) {
            return Err(ParamError { field: "mu_k", reason: "must be finite and >= 0" });
        }
        let [left, right] = self.brake_y;
        if !(left.is_finite() && right.is_finite() && left > 0.0 && right < 0.0) {
            return Err(ParamError {
                field: "brake_y",
                reason: "left offset must be > 0 and right offset < 0",
            });
        }
        Ok(())
    }

    fn lateral(&self, brake: Brake) -> f64 {
        self.brake_y[brake.index()]
    }

    fn mu(&self, brake: Brake) -> f64 {
        self.mu_k[brake.index()]
    }

    /// Rotational inertia seen by the yaw equation once the lateral
    /// constraint is eliminated: `I + m * brake_x²`.
    pub fn effective_inertia(&self) -> f64 {
        self.inertia + self.mass * self.brake_x * self.brake_x
    }

    /// Largest friction force a single brake can exert: its third of the weight times `mu_k`.
    pub fn friction_capacity(&self, brake: Brake) -> f64 {
        self.mass * self.gravity * self.mu(brake) / 3.0
    }
}

/// Pose in the global frame plus the two independent body velocities.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    /// Heading in radians, never wrapped during integration.
    pub theta: f64,
    /// Longitudinal body velocity, m/s.
    pub v_xr: f64,
    /// Yaw rate, rad/s.
    pub omega: f64,
}

impl RobotState {
    pub fn at_rest(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta, v_xr: 0.0, omega: 0.0 }
    }

    /// Lateral body velocity implied by the no-slip constraint.
    pub fn lateral_velocity(&self, params: &RobotParams) -> f64 {
        -params.brake_x * self.omega
    }

    pub fn is_finite(&self) -> bool {
        [self.x, self.y, self.theta, self.v_xr, self.omega].iter().all(|v| v.is_finite())
    }

    pub fn kinetic_energy(&self, params: &RobotParams) -> f64 {
        let lateral = self.lateral_velocity(params);
        0.5 * params.mass * (self.v_xr * self.v_xr + lateral * lateral)
            + 0.5 * params.inertia * self.omega * self.omega
    }
}

/// Discrete brake states; `true` means the brake is engaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct BrakeCommand {
    pub left: bool,
    pub right: bool,
}

impl BrakeCommand {
    pub const OFF: BrakeCommand = BrakeCommand { left: false, right: false };
    pub const LEFT: BrakeCommand = BrakeCommand { left: true, right: false };
    pub const RIGHT: BrakeCommand = BrakeCommand { left: false, right: true };

    pub fn new(left: bool, right: bool) -> Self {
        Self { left, right }
    }

    pub fn is_engaged(&self, brake: Brake) -> bool {
        match brake {
            Brake::Left => self.left,
            Brake::Right => self.right,
        }
    }

    /// 0/1 state used by the friction law.
    pub fn level(&self, brake: Brake) -> f64 {
        if self.is_engaged(brake) {
            1.0
        } else {
            0.0
        }
    }

    pub fn swapped(self) -> Self {
        Self { left: self.right, right: self.left }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ActuationInput {
    /// Drive force along `x_r`, N.
    pub drive_force: f64,
    pub brakes: BrakeCommand,
}

impl ActuationInput {
    pub const IDLE: ActuationInput = ActuationInput { drive_force: 0.0, brakes: BrakeCommand::OFF };
}

/// Body-frame accelerations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalAcceleration {
    pub a_xr: f64,
    pub a_yr: f64,
    pub alpha_dd: f64,
}

/// Planar rotation by `theta`, acting on `(x, y, theta)` triples.
pub fn rotation_to_global(theta: f64) -> Matrix3<f64> {
    let (s, c) = theta.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

/// Signed longitudinal velocity of the brake contact point.
fn brake_slip(params: &RobotParams, state: &RobotState, brake: Brake) -> f64 {
    state.v_xr - params.lateral(brake) * state.omega
}

/// Speed of the contact point of `brake`. The constraint cancels its lateral
/// component, so this is `|v_xr - y_b * omega|`.
pub fn brake_slip_speed(params: &RobotParams, state: &RobotState, brake: Brake) -> f64 {
    brake_slip(params, state, brake).abs()
}

/// `m g mu F / (3 |v|_eps)`: the factor shared by the friction force and moment.
fn friction_gain(params: &RobotParams, state: &RobotState, brakes: BrakeCommand, brake: Brake) -> f64 {
    let speed = brake_slip_speed(params, state, brake).max(params.slip_regularization);
    params.friction_capacity(brake) * brakes.level(brake) / speed
}

/// Coulomb friction at `brake` in the body frame. Its lateral part is always
/// zero; below the regularization speed it behaves as a stiff viscous law.
pub fn friction_force(
    params: &RobotParams,
    state: &RobotState,
    brakes: BrakeCommand,
    brake: Brake,
) -> Vector2<f64> {
    let gain = friction_gain(params, state, brakes, brake);
    Vector2::new(-gain * brake_slip(params, state, brake), 0.0)
}

/// Yaw moment about G produced by the friction at `brake`.
pub fn friction_moment(params: &RobotParams, state: &RobotState, brakes: BrakeCommand, brake: Brake) -> f64 {
    let gain = friction_gain(params, state, brakes, brake);
    let lateral = params.lateral(brake);
    -gain * (-lateral * state.v_xr + lateral * lateral * state.omega)
}

/// Equations of motion with the lateral constraint eliminated.
pub fn local_acceleration(params: &RobotParams, state: &RobotState, input: ActuationInput) -> LocalAcceleration {
    let lateral_velocity = state.lateral_velocity(params);
    let mut friction_x = 0.0;
    let mut moment = 0.0;
    for brake in Brake::BOTH {
        friction_x += friction_force(params, state, input.brakes, brake).x;
        moment += friction_moment(params, state, input.brakes, brake);
    }
    let a_xr = (input.drive_force + friction_x) / params.mass + lateral_velocity * state.omega;
    let alpha_dd = (moment + params.mass * params.brake_x * state.v_xr * state.omega)
        / params.effective_inertia();
    LocalAcceleration { a_xr, a_yr: -params.brake_x * alpha_dd, alpha_dd }
}

/// Resultant lateral reaction of the two constrained wheels, `F_r - F_l`.
/// Diagnostic only; the equations of motion never need it.
pub fn constraint_force(params: &RobotParams, state: &RobotState, alpha_dd: f64) -> f64 {
    -params.mass * params.brake_x * alpha_dd + params.mass * state.v_xr * state.omega
}

/// Global-frame rates `(x', y', theta')`.
pub fn to_global_velocity(params: &RobotParams, state: &RobotState) -> (f64, f64, f64) {
    let (s, c) = state.theta.sin_cos();
    let lateral = state.lateral_velocity(params);
    (state.v_xr * c - lateral * s, state.v_xr * s + lateral * c, state.omega)
}

/// `|y_r' + brake_x * omega|` recomputed from the global velocity. Zero up to
/// rounding for any state this crate produces.
pub fn constraint_residual(params: &RobotParams, state: &RobotState) -> f64 {
    let (xd, yd, _) = to_global_velocity(params, state);
    let (s, c) = state.theta.sin_cos();
    let lateral = -xd * s + yd * c;
    (lateral + params.brake_x * state.omega).abs()
}
