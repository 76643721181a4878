//! Closed-loop simulation: sense, control at a fixed rate, hold the
//! actuation and integrate the physics with fixed substeps in between.

use crate::controller::{
    compute_errors, Configuration, ControllerConfig, ControllerConfigError, Mode, Observation, ParkingController, ParkingTarget, Phase,
};
use crate::dynamics::{self, ActuationInput, BrakeCommand, ParamError, RobotParams, RobotState};
use crate::fuzzy::FisError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    Rk4,
    SemiImplicitEuler,
}

/// Standard deviations of the additive Gaussian pose noise.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub std_x: f64,
    pub std_y: f64,
    pub std_theta_deg: f64,
}

impl NoiseConfig {
    pub fn is_zero(&self) -> bool {
        self.std_x == 0.0 && self.std_y == 0.0 && self.std_theta_deg == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Physics step, s.
    pub dt_physics: f64,
    /// Controller period, s. Must be a whole number of physics steps.
    pub control_period: f64,
    /// Runs stop here if the controller has not finished, s.
    pub duration_max: f64,
    pub integrator: Integrator,
    /// Seed for sensor noise. Batch runs derive one stream per run from it.
    pub seed: u64,
    pub noise: NoiseConfig,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt_physics: 5e-5,
            control_period: 0.02,
            duration_max: 60.0,
            integrator: Integrator::Rk4,
            seed: 0,
            noise: NoiseConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid simulation setting `{field}`: {reason}")]
pub struct SimConfigError {
    pub field: &'static str,
    pub reason: &'static str,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimConfigError> {
        let bad = |field, reason| Err(SimConfigError { field, reason });
        for (field, v) in [
            ("dt_physics", self.dt_physics),
            ("control_period", self.control_period),
            ("duration_max", self.duration_max),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(field, "must be finite and > 0");
            }
        }
        let ratio = self.control_period / self.dt_physics;
        if ratio < 0.5 || (ratio - ratio.round()).abs() > 1e-9 * ratio.round() {
            return bad("control_period", "must be an integer multiple of dt_physics");
        }
        let n = self.noise;
        for (field, v) in [("noise.std_x", n.std_x), ("noise.std_y", n.std_y), ("noise.std_theta_deg", n.std_theta_deg)] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(field, "must be finite and >= 0");
            }
        }
        Ok(())
    }

    pub fn substeps(&self) -> usize {
        (self.control_period / self.dt_physics).round() as usize
    }

    /// Last control tick index that still fits inside `duration_max`.
    pub fn max_ticks(&self) -> u64 {
        (self.duration_max / self.control_period + 1e-9).floor() as u64
    }

    /// Independent noise stream for run `index` of a batch.
    pub fn rng_for_run(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("integration diverged at t = {t:.4} s: {state:?}")]
    Divergence { t: f64, state: RobotState },
    #[error("controller failed at t = {t:.4} s: {source}")]
    Controller { t: f64, source: FisError },
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error(transparent)]
    Sim(#[from] SimConfigError),
    #[error(transparent)]
    ControllerConfig(#[from] ControllerConfigError),
}

type Vector5 = [f64; 5];

fn derivative(params: &RobotParams, s: &RobotState, input: ActuationInput) -> Vector5 {
    let (xd, yd, thd) = dynamics::to_global_velocity(params, s);
    let acc = dynamics::local_acceleration(params, s, input);
    [xd, yd, thd, acc.a_xr, acc.alpha_dd]
}

fn offset(s: &RobotState, k: &Vector5, h: f64) -> RobotState {
    RobotState {
        x: s.x + h * k[0],
        y: s.y + h * k[1],
        theta: s.theta + h * k[2],
        v_xr: s.v_xr + h * k[3],
        omega: s.omega + h * k[4],
    }
}

/// Advances the state by `dt` with the actuation held constant.
pub fn integrate_step(
    params: &RobotParams,
    state: &RobotState,
    input: ActuationInput,
    dt: f64,
    integrator: Integrator,
) -> RobotState {
    match integrator {
        Integrator::Rk4 => {
            let k1 = derivative(params, state, input);
            let k2 = derivative(params, &offset(state, &k1, 0.5 * dt), input);
            let k3 = derivative(params, &offset(state, &k2, 0.5 * dt), input);
            let k4 = derivative(params, &offset(state, &k3, dt), input);
            let mut k = [0.0; 5];
            for i in 0..5 {
                k[i] = (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0;
            }
            offset(state, &k, dt)
        }
        Integrator::SemiImplicitEuler => {
            let acc = dynamics::local_acceleration(params, state, input);
            let moved = RobotState {
                v_xr: state.v_xr + dt * acc.a_xr,
                omega: state.omega + dt * acc.alpha_dd,
                ..*state
            };
            let (xd, yd, thd) = dynamics::to_global_velocity(params, &moved);
            RobotState { x: state.x + dt * xd, y: state.y + dt * yd, theta: state.theta + dt * thd, ..moved }
        }
    }
}

/// Pose readout with independent Gaussian noise per channel. Channels with
/// zero deviation are exact and draw nothing from `rng`.
pub fn sense<R: Rng>(state: &RobotState, noise: &NoiseConfig, rng: &mut R) -> Observation {
    let mut obs = Observation::exact(state);
    let mut jitter = |std: f64| {
        if std > 0.0 {
            Normal::new(0.0, std).expect("validated deviation").sample(rng)
        } else {
            0.0
        }
    };
    obs.pose.x += jitter(noise.std_x);
    obs.pose.y += jitter(noise.std_y);
    obs.pose.theta += jitter(noise.std_theta_deg);
    obs
}

/// One control tick of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRecord {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    /// rad, unwrapped
    pub theta: f64,
    pub v_xr: f64,
    pub omega: f64,
    pub drive_force: f64,
    pub brakes: BrakeCommand,
    pub phase: Phase,
    /// As seen by the controller, m.
    pub e_y: f64,
    /// As seen by the controller, deg.
    pub e_theta: f64,
}

impl LogRecord {
    pub fn state(&self) -> RobotState {
        RobotState { x: self.x, y: self.y, theta: self.theta, v_xr: self.v_xr, omega: self.omega }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// The controller reached `Done`.
    Finished,
    /// `duration_max` elapsed first.
    TimedOut,
}

/// Errors of the true final state against the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalErrors {
    pub e_x: Option<f64>,
    pub e_y: f64,
    pub e_theta_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub termination: Termination,
    /// Time alignment finished, s.
    pub alignment_time: Option<f64>,
    /// Time the controller reached `Done`, s.
    pub parking_time: Option<f64>,
    pub final_configuration: Configuration,
    pub final_errors: FinalErrors,
    pub converged: bool,
    pub max_constraint_residual: f64,
    pub ticks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryLog {
    pub records: Vec<LogRecord>,
    pub summary: RunSummary,
}

/// Everything that defines a single run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSetup<'a> {
    pub params: &'a RobotParams,
    pub sim: &'a SimConfig,
    pub controller: &'a ControllerConfig,
    pub start: Configuration,
    pub target: ParkingTarget,
    pub mode: Mode,
}

fn within_tolerance(cfg: &ControllerConfig, errors: &FinalErrors) -> bool {
    errors.e_y.abs() < cfg.tol_y
        && errors.e_theta_deg.abs() < cfg.tol_theta_deg
        && errors.e_x.is_none_or(|e| e.abs() < cfg.tol_x)
}

/// Runs the closed loop from rest at `setup.start` until the controller is
/// done or time runs out. Not converging is reported in the summary, not as
/// an error.
pub fn run_scenario<R: Rng>(setup: &RunSetup<'_>, rng: &mut R) -> Result<TrajectoryLog, SimError> {
    let RunSetup { params, sim, controller: cfg, start, target, mode } = *setup;
    params.validate()?;
    sim.validate()?;
    let dt = sim.dt_physics;
    let period = sim.control_period;
    let substeps = sim.substeps();
    let max_ticks = sim.max_ticks();

    let mut state = RobotState::at_rest(start.x, start.y, start.theta.to_radians());
    let mut controller = ParkingController::new(cfg.clone(), mode, target)?;
    let mut records = Vec::with_capacity(max_ticks.min(1 << 16) as usize + 1);
    let mut alignment_time = None;
    let mut parking_time = None;
    let mut max_residual = 0.0f64;

    let termination = 'ticks: {
        for tick in 0..=max_ticks {
            let t = tick as f64 * period;
            let obs = sense(&state, &sim.noise, rng);
            let errors = controller.errors(&obs);
            let before = controller.phase();
            let (input, phase) =
                controller.step(&errors, period).map_err(|source| SimError::Controller { t, source })?;
            if before == Phase::Align && phase != Phase::Align {
                alignment_time = Some(t);
            }
            max_residual = max_residual.max(dynamics::constraint_residual(params, &state));
            records.push(LogRecord {
                t,
                x: state.x,
                y: state.y,
                theta: state.theta,
                v_xr: state.v_xr,
                omega: state.omega,
                drive_force: input.drive_force,
                brakes: input.brakes,
                phase,
                e_y: errors.signal.e_y,
                e_theta: errors.signal.e_theta,
            });
            if phase == Phase::Done {
                parking_time = Some(t);
                break 'ticks Termination::Finished;
            }
            if tick == max_ticks {
                break;
            }
            for _ in 0..substeps {
                state = integrate_step(params, &state, input, dt, sim.integrator);
            }
            if !state.is_finite() {
                return Err(SimError::Divergence { t: t + period, state });
            }
        }
        Termination::TimedOut
    };

    let truth = compute_errors(&Observation::exact(&state), &target, cfg.beta_deg);
    let final_errors = FinalErrors {
        e_x: match mode {
            Mode::FullParking => truth.e_x,
            Mode::FlcOnly => None,
        },
        e_y: truth.signal.e_y,
        e_theta_deg: truth.signal.e_theta,
    };
    let converged = termination == Termination::Finished && within_tolerance(cfg, &final_errors);
    let summary = RunSummary {
        mode,
        termination,
        alignment_time,
        parking_time,
        final_configuration: Configuration::from_state(&state),
        final_errors,
        converged,
        max_constraint_residual: max_residual,
        ticks: records.len(),
    };
    Ok(TrajectoryLog { records, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params() -> RobotParams {
        RobotParams::default()
    }

    fn euler_reference(p: &RobotParams, s: &RobotState, input: ActuationInput, dt: f64, n: usize) -> RobotState {
        let mut s = *s;
        for _ in 0..n {
            let acc = dynamics::local_acceleration(p, &s, input);
            let (xd, yd, thd) = dynamics::to_global_velocity(p, &s);
            s = RobotState {
                x: s.x + dt * xd,
                y: s.y + dt * yd,
                theta: s.theta + dt * thd,
                v_xr: s.v_xr + dt * acc.a_xr,
                omega: s.omega + dt * acc.alpha_dd,
            };
        }
        s
    }

    #[test]
    fn constant_velocity_is_exact() {
        let s = RobotState { v_xr: 1.0, ..RobotState::default() };
        for integrator in [Integrator::Rk4, Integrator::SemiImplicitEuler] {
            let next = integrate_step(&params(), &s, ActuationInput::IDLE, 0.001, integrator);
            assert_eq!(next, RobotState { x: 0.001, ..s });
        }
    }

    #[test]
    fn coasting_spin_trades_speed_against_yaw() {
        // Zero force with a yaw rate is not a fixed point: the constraint
        // couples v_xr' = -brake_x * omega^2 and omega' ~ v_xr * omega.
        let p = params();
        let s = RobotState { omega: 1.0, ..RobotState::default() };
        let dt = 1e-3;
        let next = integrate_step(&p, &s, ActuationInput::IDLE, dt, Integrator::Rk4);
        let reference = euler_reference(&p, &s, ActuationInput::IDLE, dt / 1000.0, 1000);
        assert_abs_diff_eq!(next.v_xr, reference.v_xr, epsilon = 1e-8);
        assert_abs_diff_eq!(next.omega, reference.omega, epsilon = 1e-8);
        assert_abs_diff_eq!(next.v_xr, -p.brake_x * dt, epsilon = 1e-8);
        // energy is conserved by the constraint
        assert_abs_diff_eq!(next.kinetic_energy(&p), s.kinetic_energy(&p), epsilon = 1e-12);
    }

    #[test]
    fn braking_one_step_matches_first_order() {
        let p = params();
        let s = RobotState { v_xr: 1.0, ..RobotState::default() };
        let input = ActuationInput { drive_force: 0.0, brakes: BrakeCommand::LEFT };
        let dt = 1e-3;
        let next = integrate_step(&p, &s, input, dt, Integrator::Rk4);
        let reference = euler_reference(&p, &s, input, dt / 1000.0, 1000);
        assert_abs_diff_eq!(next.omega, reference.omega, epsilon = 1e-8);
        assert_abs_diff_eq!(next.omega / dt, 0.230395738027, epsilon = 1e-3);
    }

    #[test]
    fn sense_noise_behaviour() {
        let s = RobotState { x: 1.0, y: -2.0, theta: 0.3, v_xr: 0.0, omega: 0.1 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let obs = sense(&s, &NoiseConfig::default(), &mut rng);
        assert_eq!(obs, Observation::exact(&s));

        let noise = NoiseConfig { std_x: 0.01, std_y: 0.005, std_theta_deg: 0.5 };
        let a: Vec<_> = {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            (0..20).map(|_| sense(&s, &noise, &mut rng)).collect()
        };
        let b: Vec<_> = {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            (0..20).map(|_| sense(&s, &noise, &mut rng)).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn five_sigma_bound_holds() {
        // P(|z| > 5) is 5.7e-7; 200k samples should essentially never exceed it.
        let s = RobotState::default();
        let noise = NoiseConfig { std_y: 0.005, ..NoiseConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 200_000;
        let outside = (0..n).filter(|_| sense(&s, &noise, &mut rng).pose.y.abs() > 0.025).count();
        assert!((outside as f64) / (n as f64) <= 1e-5, "{outside} samples beyond 5 sigma");
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        let cfg = SimConfig { control_period: 0.0205, dt_physics: 0.001, ..SimConfig::default() };
        assert_eq!(cfg.validate().unwrap_err().field, "control_period");
        let cfg = SimConfig { duration_max: 0.0, ..SimConfig::default() };
        assert_eq!(cfg.validate().unwrap_err().field, "duration_max");
        assert_eq!(SimConfig::default().substeps(), 400);
    }

    #[test]
    fn start_at_target_finishes_immediately() {
        let p = params();
        let sim = SimConfig::default();
        let cfg = ControllerConfig::default();
        let setup = RunSetup {
            params: &p,
            sim: &sim,
            controller: &cfg,
            start: Configuration::new(2.0, 0.0, 0.0),
            target: ParkingTarget { x: Some(2.0), y: 0.0 },
            mode: Mode::FullParking,
        };
        let log = run_scenario(&setup, &mut sim.rng_for_run(0)).unwrap();
        assert_eq!(log.records.len(), 1);
        assert!(log.summary.converged);
        assert_eq!(log.summary.parking_time, Some(0.0));
        assert_eq!(log.records[0].drive_force, 0.0);
    }

    #[test]
    fn timeout_is_reported_not_raised() {
        let p = params();
        let sim = SimConfig { duration_max: 0.5, ..SimConfig::default() };
        let cfg = ControllerConfig::default();
        let setup = RunSetup {
            params: &p,
            sim: &sim,
            controller: &cfg,
            start: Configuration::new(0.0, 1.0, 0.0),
            target: ParkingTarget { x: Some(7.0), y: 0.0 },
            mode: Mode::FullParking,
        };
        let log = run_scenario(&setup, &mut sim.rng_for_run(0)).unwrap();
        assert_eq!(log.summary.termination, Termination::TimedOut);
        assert!(!log.summary.converged);
        assert_eq!(log.records.len(), 26);
        assert!(log.records.windows(2).all(|w| w[0].t < w[1].t));
    }
}
