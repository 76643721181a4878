//! Sequential parking controller.
//!
//! `Align` holds a constant drive force and lets the fuzzy system pick the
//! brake until the lateral and heading errors settle. `ParkX` then releases
//! the brakes and drives the remaining longitudinal error to zero with a
//! saturated PD law whose magnitude never drops below the motor deadzone
//! floor. `Done` is terminal and fully idle.
//!
//! A final heading `beta` is handled by expressing the pose in a frame
//! rotated by `beta` about the origin and parking along that frame's x axis.

use crate::dynamics::{ActuationInput, BrakeCommand, RobotState};
use crate::fuzzy::{ErrorSignal, Fis, FisDefinition, FisError};
use crate::wrap_degrees;
use serde::{Deserialize, Serialize};

/// A pose as reported externally: meters and degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Configuration {
    pub x: f64,
    pub y: f64,
    /// deg
    pub theta: f64,
}

impl Configuration {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    /// Reported form of a state, heading wrapped into (-180, 180].
    pub fn from_state(state: &RobotState) -> Self {
        Self::new(state.x, state.y, wrap_degrees(state.theta.to_degrees()))
    }

    /// Rotates the pose by `deg` about the global origin.
    pub fn rotated(&self, deg: f64) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y, self.theta + deg)
    }

    /// Reflection through the x axis.
    pub fn mirrored(&self) -> Self {
        Self::new(self.x, -self.y, -self.theta)
    }
}

/// What the controller sees each tick: a pose plus the yaw rate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Observation {
    pub pose: Configuration,
    /// deg/s
    pub theta_dot: f64,
}

impl Observation {
    /// Noise-free readout. The heading is not wrapped here; the heading
    /// error is wrapped instead.
    pub fn exact(state: &RobotState) -> Self {
        Self {
            pose: Configuration::new(state.x, state.y, state.theta.to_degrees()),
            theta_dot: state.omega.to_degrees(),
        }
    }
}

/// Desired final pose in the `beta`-rotated frame. The heading target is
/// always zero in that frame; `x = None` leaves x uncontrolled.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ParkingTarget {
    pub x: Option<f64>,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Errors {
    pub signal: ErrorSignal,
    pub e_x: Option<f64>,
}

/// Errors of an observation against `target`, both taken in the frame
/// rotated by `beta_deg`.
pub fn compute_errors(obs: &Observation, target: &ParkingTarget, beta_deg: f64) -> Errors {
    let (s, c) = beta_deg.to_radians().sin_cos();
    let x = c * obs.pose.x + s * obs.pose.y;
    let y = -s * obs.pose.x + c * obs.pose.y;
    let theta = obs.pose.theta - beta_deg;
    Errors {
        signal: ErrorSignal::new(wrap_degrees(-theta), target.y - y, -obs.theta_dot),
        e_x: target.x.map(|xd| xd - x),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    Align,
    ParkX,
    Done,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Align => "ALIGN",
            Phase::ParkX => "PARK_X",
            Phase::Done => "DONE",
        }
    }

    pub fn parse(s: &str) -> Option<Phase> {
        match s {
            "ALIGN" => Some(Phase::Align),
            "PARK_X" => Some(Phase::ParkX),
            "DONE" => Some(Phase::Done),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Align y and heading only; stop once aligned.
    FlcOnly,
    /// Align, then park at the target x.
    FullParking,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// Constant drive force while aligning, N.
    pub drive_force: f64,
    /// Proportional gain on the x error, N/m.
    pub kp: f64,
    /// Derivative gain on the x error, N·s/m.
    pub kd: f64,
    /// Actuator saturation, N.
    pub force_max: f64,
    /// Deadzone floor while the x error is outside tolerance, N.
    pub force_min: f64,
    pub tol_y: f64,
    pub tol_theta_deg: f64,
    /// Alignment also waits for the heading rate to settle, deg/s. The drive
    /// wheel cannot stop a spin once the brakes are released.
    pub tol_theta_dot_deg_s: f64,
    pub tol_x: f64,
    /// Errors must stay inside tolerance this long before a phase change, s.
    pub hold_time: f64,
    /// Final heading, deg.
    pub beta_deg: f64,
    /// Let the fuzzy system steer again during x-parking if alignment drifts
    /// beyond twice the tolerances.
    pub reentry_guard: bool,
    /// The guard engages beyond this multiple of the tolerances and lets go
    /// once the robot is back inside them.
    pub guard_factor: f64,
    /// Lives in its own `[fis]` section of a scenario file.
    #[serde(skip)]
    pub fis: FisDefinition,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            drive_force: 5.9552,
            kp: 10.0,
            kd: 10.0,
            force_max: 10.0,
            force_min: 1.0,
            tol_y: 0.02,
            tol_theta_deg: 2.0,
            tol_theta_dot_deg_s: 2.0,
            tol_x: 0.05,
            hold_time: 0.5,
            beta_deg: 0.0,
            reentry_guard: true,
            guard_factor: 1.0,
            fis: FisDefinition::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ControllerConfigError {
    #[error("invalid controller setting `{field}`: {reason}")]
    Setting { field: &'static str, reason: &'static str },
    #[error(transparent)]
    Fis(#[from] FisError),
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ControllerConfigError> {
        let bad = |field, reason| Err(ControllerConfigError::Setting { field, reason });
        let positive = [
            ("kp", self.kp),
            ("force_min", self.force_min),
            ("tol_y", self.tol_y),
            ("tol_theta_deg", self.tol_theta_deg),
            ("tol_theta_dot_deg_s", self.tol_theta_dot_deg_s),
            ("tol_x", self.tol_x),
        ];
        for (field, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(field, "must be finite and > 0");
            }
        }
        if !(self.kd.is_finite() && self.kd >= 0.0) {
            return bad("kd", "must be finite and >= 0");
        }
        if !(self.hold_time.is_finite() && self.hold_time >= 0.0) {
            return bad("hold_time", "must be finite and >= 0");
        }
        if !(self.guard_factor.is_finite() && self.guard_factor >= 1.0) {
            return bad("guard_factor", "must be finite and >= 1");
        }
        if !(self.force_max.is_finite() && self.force_max >= self.force_min) {
            return bad("force_max", "must be finite and >= force_min");
        }
        if !(self.drive_force.is_finite() && self.drive_force.abs() <= self.force_max) {
            return bad("drive_force", "must be finite with |drive_force| <= force_max");
        }
        if !self.beta_deg.is_finite() {
            return bad("beta_deg", "must be finite");
        }
        self.fis.validate()?;
        Ok(())
    }

    fn aligned(&self, e: &ErrorSignal) -> bool {
        e.e_y.abs() < self.tol_y
            && e.e_theta.abs() < self.tol_theta_deg
            && e.e_theta_dot.abs() < self.tol_theta_dot_deg_s
    }

    fn misaligned(&self, e: &ErrorSignal) -> bool {
        e.e_y.abs() > self.guard_factor * self.tol_y || e.e_theta.abs() > self.guard_factor * self.tol_theta_deg
    }

    /// Saturated PD force on the x error with the deadzone floor applied
    /// outside the tolerance band.
    pub fn park_force(&self, e_x: f64, e_x_rate: f64) -> f64 {
        let u = self.kp * e_x + self.kd * e_x_rate;
        if e_x.abs() >= self.tol_x {
            let sign = if u != 0.0 { u.signum() } else { e_x.signum() };
            sign * u.abs().clamp(self.force_min, self.force_max)
        } else {
            u.clamp(-self.force_max, self.force_max)
        }
    }
}

/// Counts consecutive in-tolerance ticks.
#[derive(Debug, Clone, Copy, Default)]
struct HoldTimer {
    elapsed: f64,
}

impl HoldTimer {
    fn update(&mut self, inside: bool, dt: f64, required: f64) -> bool {
        if inside {
            self.elapsed += dt;
        } else {
            self.elapsed = 0.0;
        }
        inside && self.elapsed + 1e-9 >= required
    }
}

/// Controller state for one run. Phases only move forward.
#[derive(Debug, Clone)]
pub struct ParkingController {
    config: ControllerConfig,
    fis: Fis,
    mode: Mode,
    target: ParkingTarget,
    phase: Phase,
    align_hold: HoldTimer,
    park_hold: HoldTimer,
    last_e_x: Option<f64>,
    started: bool,
    guard_active: bool,
    overrun_reported: bool,
}

impl ParkingController {
    pub fn new(config: ControllerConfig, mode: Mode, target: ParkingTarget) -> Result<Self, ControllerConfigError> {
        config.validate()?;
        let fis = config.fis.compile()?;
        Ok(Self {
            config,
            fis,
            mode,
            target,
            phase: Phase::Align,
            align_hold: HoldTimer::default(),
            park_hold: HoldTimer::default(),
            last_e_x: None,
            started: false,
            guard_active: false,
            overrun_reported: false,
        })
    }

    /// Switches to align-only operation: once aligned the controller idles
    /// and reports `Done` instead of parking in x.
    pub fn flc_only_mode(mut self) -> Self {
        self.mode = Mode::FlcOnly;
        self
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn target(&self) -> &ParkingTarget {
        &self.target
    }

    pub fn errors(&self, obs: &Observation) -> Errors {
        compute_errors(obs, &self.target, self.config.beta_deg)
    }

    /// One control tick: update the phase from `errors`, then emit the
    /// actuation held until the next tick.
    pub fn step(&mut self, errors: &Errors, dt: f64) -> Result<(ActuationInput, Phase), FisError> {
        let first_tick = !self.started;
        self.started = true;
        let signal = &errors.signal;
        let e_x = match self.mode {
            Mode::FullParking => errors.e_x,
            Mode::FlcOnly => None,
        };
        let e_x_rate = match (e_x, self.last_e_x) {
            (Some(now), Some(before)) if dt > 0.0 => (now - before) / dt,
            _ => 0.0,
        };
        self.last_e_x = e_x;

        if self.phase == Phase::Align {
            let aligned = self.config.aligned(signal);
            // starting at rest inside tolerance counts as settled
            let settled = (first_tick && aligned) || self.align_hold.update(aligned, dt, self.config.hold_time);
            if settled {
                self.phase = match self.mode {
                    Mode::FlcOnly => Phase::Done,
                    Mode::FullParking => Phase::ParkX,
                };
            } else if let Some(e_x) = e_x {
                if e_x < 0.0 && !self.overrun_reported {
                    log::warn!("target x passed before alignment converged (e_x = {e_x:.3} m)");
                    self.overrun_reported = true;
                }
            }
        }

        if self.phase == Phase::ParkX {
            let e_x = e_x.expect("x-parking requires a target x");
            if self.config.reentry_guard {
                if self.config.misaligned(signal) {
                    self.guard_active = true;
                } else if self.config.aligned(signal) {
                    self.guard_active = false;
                }
            }
            // parking only completes while the guard is idle
            let inside = e_x.abs() < self.config.tol_x && !self.guard_active;
            if (first_tick && inside) || self.park_hold.update(inside, dt, self.config.hold_time) {
                self.phase = Phase::Done;
            }
        }

        let input = match self.phase {
            Phase::Align => ActuationInput {
                drive_force: self.config.drive_force,
                brakes: self.fis.evaluate(signal)?,
            },
            Phase::ParkX => {
                let e_x = e_x.expect("x-parking requires a target x");
                let mut drive_force = self.config.park_force(e_x, e_x_rate);
                // the brakes only steer while the wheel pushes
                if self.guard_active && drive_force.abs() < self.config.force_min {
                    let sign = if drive_force != 0.0 { drive_force.signum() } else { e_x.signum() };
                    drive_force = sign * self.config.force_min;
                }
                let brakes = if self.guard_active {
                    if drive_force < 0.0 {
                        // Backing up looks like driving forward with the body
                        // turned around: the lateral error and the brake
                        // sides flip, the heading terms do not.
                        let reversed = ErrorSignal { e_y: -signal.e_y, ..*signal };
                        self.fis.evaluate(&reversed)?.swapped()
                    } else {
                        self.fis.evaluate(signal)?
                    }
                } else {
                    BrakeCommand::OFF
                };
                ActuationInput { drive_force, brakes }
            }
            Phase::Done => ActuationInput::IDLE,
        };
        Ok((input, self.phase))
    }
}
