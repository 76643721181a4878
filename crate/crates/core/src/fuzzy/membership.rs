use serde::{Deserialize, Serialize};

/// Shape of a single linguistic term.
///
/// The two sigmoids are written so that `SigmaS { center: c, slope: a }`
/// evaluated at `x` is bit-for-bit `SigmaZ { center: -c, slope: a }` at `-x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MembershipFunction {
    /// Falling sigmoid, 1 on the far left.
    SigmaZ { center: f64, slope: f64 },
    Gaussian { mean: f64, sigma: f64 },
    /// Rising sigmoid, 1 on the far right.
    SigmaS { center: f64, slope: f64 },
}

impl MembershipFunction {
    pub fn degree(&self, x: f64) -> f64 {
        match *self {
            MembershipFunction::SigmaZ { center, slope } => 1.0 / (1.0 + (slope * (x - center)).exp()),
            MembershipFunction::SigmaS { center, slope } => 1.0 / (1.0 + (-slope * (x - center)).exp()),
            MembershipFunction::Gaussian { mean, sigma } => {
                let d = x - mean;
                (-(d * d) / (2.0 * sigma * sigma)).exp()
            }
        }
    }

    pub(crate) fn check(&self) -> Result<(), &'static str> {
        let (a, b) = match *self {
            MembershipFunction::SigmaZ { center, slope } | MembershipFunction::SigmaS { center, slope } => {
                (center, slope)
            }
            MembershipFunction::Gaussian { mean, sigma } => (mean, sigma),
        };
        if !a.is_finite() || !b.is_finite() || b <= 0.0 {
            return Err("membership parameters must be finite with a positive slope/sigma");
        }
        Ok(())
    }
}
