//! Simulation and control of a mobile robot that is driven by one omni
//! wheel and steered by two ON/OFF brakes.
//!
//! * [`dynamics`]: constrained planar equations of motion with Coulomb brake friction.
//! * [`fuzzy`]: Mamdani inference that picks which brake to engage.
//! * [`controller`]: sequential parking controller (fuzzy alignment, then saturated x-control).
//! * [`simulator`]: fixed-step closed-loop simulation and trajectory logs.
//! * [`scenario`], [`export`], [`batch`]: scenario files, CSV/JSON export and batch runs.

pub mod batch;
pub mod controller;
pub mod dynamics;
pub mod export;
pub mod fuzzy;
pub mod scenario;
pub mod simulator;

/// Wraps an angle in degrees into (-180, 180].
pub fn wrap_degrees(deg: f64) -> f64 {
    // in-range values pass through untouched so that wrap(-x) == -wrap(x) exactly
    if deg > -180.0 && deg <= 180.0 {
        return deg;
    }
    let wrapped = deg.rem_euclid(360.0);
    if wrapped > 180.0 {
        wrapped - 360.0
    } else {
        wrapped
    }
}

#[cfg(test)]
mod tests {
    use super::wrap_degrees;

    #[test]
    fn wraps_into_half_open_interval() {
        assert_eq!(wrap_degrees(180.0), 180.0);
        assert_eq!(wrap_degrees(-180.0), 180.0);
        assert_eq!(wrap_degrees(540.0), 180.0);
        assert_eq!(wrap_degrees(181.0), -179.0);
        assert_eq!(wrap_degrees(-22.0), -22.0);
        assert_eq!(wrap_degrees(720.5), 0.5);
    }
}
