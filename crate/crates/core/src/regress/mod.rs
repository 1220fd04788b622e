//! Classical estimators and the analytic effect of proxy labels on them.
//!
//! Measurement error is taken as `e = y − u` throughout, under which the
//! proxy regression solution is `(1 + γ)β + α`.

mod linear;
mod logistic;

use thiserror::Error;

pub use linear::{
    least_squares, measurement_regression, mse_lower_bound, ols_fit, prediction_error_covariance,
    proxy_solution, LinearFit, MeasurementCoeffs,
};
pub use logistic::{
    logistic_fit, logistic_gradient, logistic_loglik, LogisticFit, MAX_NEWTON_ITERATIONS,
};

#[derive(Debug, Error)]
pub enum RegressError {
    #[error("rank deficient design: {0}")]
    RankDeficient(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("Newton iterations did not converge after {iterations} steps (gradient norm {gradient_norm:.3e})")]
    NotConverged { iterations: usize, gradient_norm: f64 },
}
