//! Standardized linear structural equation model for neighbourhood, behaviour
//! and arrests at two time points.
//!
//! ```text
//! X            ~ normal(0, σ_X)
//! (u0, u1) | X ~ MVN((βX, βX), [[σ_u², δ], [δ, σ_u²]])
//! y_t | X, u_t ~ normal(αX + γ u_t, σ_y)
//! ```

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::rng::{self, streams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemParams {
    pub beta: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub eta: f64,
    pub sigma_x: f64,
    pub sigma_u: f64,
    pub sigma_y: f64,
    pub delta: f64,
}

/// Chooses the exogenous variances so that `X`, `u_t` and `y_t` all have unit
/// population variance.
pub fn standardize_sem(beta: f64, alpha: f64, gamma: f64, eta: f64) -> Result<SemParams, SimError> {
    if !(beta.is_finite() && alpha.is_finite() && gamma.is_finite() && eta.is_finite()) {
        return Err(SimError::InvalidParameter("SEM coefficients must be finite".into()));
    }
    if eta.abs() >= 1.0 {
        return Err(SimError::InvalidParameter(format!("|eta| must be < 1, got {eta}")));
    }
    let var_u = 1.0 - beta * beta;
    if var_u <= 0.0 {
        return Err(SimError::InfeasibleStandardization(format!(
            "latent residual variance 1 - beta^2 = {var_u} is not positive"
        )));
    }
    let var_y = 1.0 - alpha * alpha - gamma * gamma - 2.0 * alpha * gamma * beta;
    // A zero proxy variance is the noiseless-proxy limit and stays admissible.
    if var_y < 0.0 {
        return Err(SimError::InfeasibleStandardization(format!(
            "proxy residual variance 1 - a^2 - g^2 - 2agb = {var_y} is negative"
        )));
    }
    Ok(SemParams {
        beta,
        alpha,
        gamma,
        eta,
        sigma_x: 1.0,
        sigma_u: var_u.sqrt(),
        sigma_y: var_y.sqrt(),
        delta: eta * var_u,
    })
}

impl SemParams {
    /// Unstandardized parameterisation with freely chosen noise scales.
    pub fn raw(
        beta: f64,
        alpha: f64,
        gamma: f64,
        eta: f64,
        sigma_u: f64,
        sigma_y: f64,
    ) -> Result<Self, SimError> {
        if eta.abs() >= 1.0 {
            return Err(SimError::InvalidParameter(format!("|eta| must be < 1, got {eta}")));
        }
        if !(sigma_u > 0.0) || !(sigma_y >= 0.0) {
            return Err(SimError::InvalidParameter(
                "sigma_u must be > 0 and sigma_y >= 0".into(),
            ));
        }
        Ok(Self {
            beta,
            alpha,
            gamma,
            eta,
            sigma_x: 1.0,
            sigma_u,
            sigma_y,
            delta: eta * sigma_u * sigma_u,
        })
    }

    pub fn implied_var_u(&self) -> f64 {
        self.beta * self.beta * self.sigma_x * self.sigma_x + self.sigma_u * self.sigma_u
    }

    pub fn implied_var_y(&self) -> f64 {
        let sx2 = self.sigma_x * self.sigma_x;
        self.alpha * self.alpha * sx2
            + self.gamma * self.gamma * self.implied_var_u()
            + 2.0 * self.alpha * self.gamma * self.beta * sx2
            + self.sigma_y * self.sigma_y
    }

    /// Population correlation between `u0` and `u1`.
    pub fn implied_corr_u(&self) -> f64 {
        (self.beta * self.beta * self.sigma_x * self.sigma_x + self.delta) / self.implied_var_u()
    }

    /// Population slope of `y_t` on `X`.
    pub fn implied_proxy_slope(&self) -> f64 {
        self.alpha + self.gamma * self.beta
    }
}

/// Columns `x, u0, u1, y0, y1` drawn i.i.d. from the model.
#[derive(Debug, Clone, PartialEq)]
pub struct SemDataset {
    pub x: Vec<f64>,
    pub u0: Vec<f64>,
    pub u1: Vec<f64>,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    pub seed: u64,
}

impl SemDataset {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Design matrix `[1, x]`.
    pub fn design(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { self.x[i] })
    }

    /// Copy with the covariate replaced by zeros, for models that must not see it.
    pub fn without_covariate(&self) -> Self {
        Self {
            x: vec![0.0; self.len()],
            ..self.clone()
        }
    }
}

pub fn simulate_sem(params: &SemParams, n: usize, seed: u64) -> Result<SemDataset, SimError> {
    if n < 2 {
        return Err(SimError::TooFewRows(n));
    }
    let mut rng = rng::stream(seed, streams::SEM);
    let eta = params.eta;
    let eta_c = (1.0 - eta * eta).sqrt();
    let mut data = SemDataset {
        x: Vec::with_capacity(n),
        u0: Vec::with_capacity(n),
        u1: Vec::with_capacity(n),
        y0: Vec::with_capacity(n),
        y1: Vec::with_capacity(n),
        seed,
    };
    for _ in 0..n {
        let z: [f64; 5] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        let x = params.sigma_x * z[0];
        let u0 = params.beta * x + params.sigma_u * z[1];
        let u1 = params.beta * x + params.sigma_u * (eta * z[1] + eta_c * z[2]);
        let y0 = params.alpha * x + params.gamma * u0 + params.sigma_y * z[3];
        let y1 = params.alpha * x + params.gamma * u1 + params.sigma_y * z[4];
        data.x.push(x);
        data.u0.push(u0);
        data.u1.push(u1);
        data.y0.push(y0);
        data.y1.push(y1);
    }
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{correlation, variance};
    use proptest::prelude::*;

    #[test]
    fn noiseless_proxy_configuration() {
        let p = standardize_sem(0.0, 0.0, 1.0, 0.0).unwrap();
        assert_eq!(p.sigma_u, 1.0);
        assert_eq!(p.sigma_y, 0.0);
        assert_eq!(p.delta, 0.0);
        let d = simulate_sem(&p, 50, 3).unwrap();
        assert_eq!(d.y0, d.u0);
        assert_eq!(d.y1, d.u1);
    }

    #[test]
    fn latent_residual_variance_for_beta_point_two() {
        let p = standardize_sem(0.2, 0.4, 0.4, 0.5).unwrap();
        assert!((p.sigma_u * p.sigma_u - 0.96).abs() < 1e-15);
    }

    #[test]
    fn infeasible_budget_is_rejected() {
        assert!(matches!(
            standardize_sem(0.9, 0.9, 0.9, 0.0),
            Err(SimError::InfeasibleStandardization(_))
        ));
        assert!(matches!(
            standardize_sem(1.0, 0.0, 0.0, 0.0),
            Err(SimError::InfeasibleStandardization(_))
        ));
        assert!(standardize_sem(0.1, 0.1, 0.1, 1.0).is_err());
    }

    #[test]
    fn needs_two_rows() {
        let p = standardize_sem(0.2, 0.4, 0.4, 0.5).unwrap();
        assert!(matches!(simulate_sem(&p, 1, 0), Err(SimError::TooFewRows(1))));
    }

    #[test]
    fn sample_moments_at_one_million_rows() {
        let p = standardize_sem(0.2, 0.4, 0.4, 0.5).unwrap();
        let d = simulate_sem(&p, 1_000_000, 11).unwrap();
        assert!((variance(&d.u0) - 1.0).abs() < 0.01);
        assert!((variance(&d.y1) - 1.0).abs() < 0.01);
        assert!((variance(&d.x) - 1.0).abs() < 0.01);
        let expected = p.beta * p.beta + p.delta;
        assert!((correlation(&d.u0, &d.u1) - expected).abs() < 0.01);
    }

    #[test]
    fn same_seed_same_data() {
        let p = standardize_sem(0.3, 0.2, 0.5, -0.4).unwrap();
        assert_eq!(simulate_sem(&p, 100, 5).unwrap(), simulate_sem(&p, 100, 5).unwrap());
        assert_ne!(simulate_sem(&p, 100, 5).unwrap(), simulate_sem(&p, 100, 6).unwrap());
    }

    proptest! {
        #[test]
        fn standardized_variances_are_unit(
            beta in -0.95f64..0.95,
            alpha in -0.6f64..0.6,
            gamma in -0.6f64..0.6,
            eta in -0.99f64..0.99,
        ) {
            if let Ok(p) = standardize_sem(beta, alpha, gamma, eta) {
                prop_assert!((p.implied_var_u() - 1.0).abs() < 1e-12);
                prop_assert!((p.implied_var_y() - 1.0).abs() < 1e-12);
                prop_assert!(p.delta.abs() < p.sigma_u * p.sigma_u);
                prop_assert!(p.sigma_u > 0.0 && p.sigma_y >= 0.0);
            }
        }
    }
}
