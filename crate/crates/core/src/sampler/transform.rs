use serde::{Deserialize, Serialize};

use crate::math::softplus;

/// Support of a sampled parameter; each maps to the real line by a smooth
/// bijection whose log-Jacobian is added to the target density.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Support {
    Real,
    /// `(0, ∞)` via `x = exp(θ)`.
    Positive,
    /// `(−1, 1)` via `x = tanh(θ)`.
    Correlation,
}

impl Support {
    pub fn constrain(self, theta: f64) -> f64 {
        match self {
            Support::Real => theta,
            Support::Positive => theta.exp(),
            Support::Correlation => theta.tanh(),
        }
    }

    pub fn unconstrain(self, x: f64) -> f64 {
        match self {
            Support::Real => x,
            Support::Positive => x.ln(),
            Support::Correlation => x.atanh(),
        }
    }

    /// `log |dx/dθ|`.
    pub fn log_jacobian(self, theta: f64) -> f64 {
        match self {
            Support::Real => 0.0,
            Support::Positive => theta,
            // log(1 − tanh²θ) = 2 (ln 2 − |θ| − log(1 + e^{−2|θ|}))
            Support::Correlation => {
                let a = theta.abs();
                2.0 * (std::f64::consts::LN_2 - a - softplus(-2.0 * a))
            }
        }
    }

    pub fn contains(self, x: f64) -> bool {
        match self {
            Support::Real => x.is_finite(),
            Support::Positive => x > 0.0 && x.is_finite(),
            Support::Correlation => x > -1.0 && x < 1.0,
        }
    }
}
