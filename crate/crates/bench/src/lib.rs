//! Fixed-seed inputs shared by the benchmarks.

use labelbias_core::simdata::{simulate_sem, simulate_threshold_dgp, standardize_sem, CovariateSpec};
use labelbias_core::threshold::{calibrate, solve_base_rate};
use labelbias_core::{BinaryProxyData, SemDataset, ThresholdSpec};

pub const SEM_TRUTH: (f64, f64, f64, f64) = (0.2, 0.4, 0.4, 0.2);

/// Standardized SEM sample at `(β, α, γ, η) = SEM_TRUTH`.
pub fn sem_data(n: usize) -> (SemDataset, f64) {
    let (b, a, g, e) = SEM_TRUTH;
    let p = standardize_sem(b, a, g, e).expect("feasible point");
    (simulate_sem(&p, n, 1).expect("simulation"), p.sigma_u)
}

/// The calibrated two-group spec used throughout the diagnosis experiments.
pub fn diabetes_spec() -> ThresholdSpec {
    let shares = [("insured".to_string(), 0.16), ("uninsured".to_string(), 0.29)];
    calibrate(solve_base_rate(0.14), &shares, 0.1).expect("valid shares").0
}

pub fn diabetes_data(n: usize, spec: &ThresholdSpec) -> BinaryProxyData {
    simulate_threshold_dgp(&[-2.2, 0.8, 0.6, 0.0], spec, n, 2, &CovariateSpec::default(), true)
        .expect("simulation")
        .observed()
}
