use nalgebra::{DMatrix, DVector};

use super::RegressError;
use crate::math::{compensated_sum, log_sigmoid, sigmoid};

pub const MAX_NEWTON_ITERATIONS: usize = 100;
const MAX_HALVINGS: usize = 20;
const STEP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub coeffs: DVector<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    /// Euclidean norm of the gradient of the mean log-likelihood at `coeffs`.
    pub gradient_norm: f64,
}

impl LogisticFit {
    pub fn predict_proba(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (x * &self.coeffs).iter().map(|&v| sigmoid(v)).collect()
    }
}

pub fn logistic_loglik(x: &DMatrix<f64>, y: &[u8], beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    compensated_sum(
        eta.iter()
            .zip(y)
            .map(|(&e, &yi)| if yi == 1 { log_sigmoid(e) } else { log_sigmoid(-e) }),
    )
}

/// Score vector `Xᵀ(y − p)`.
pub fn logistic_gradient(x: &DMatrix<f64>, y: &[u8], beta: &DVector<f64>) -> DVector<f64> {
    let eta = x * beta;
    let resid = DVector::from_iterator(
        y.len(),
        eta.iter()
            .zip(y)
            .map(|(&e, &yi)| if yi == 1 { sigmoid(-e) } else { -sigmoid(e) }),
    );
    x.tr_mul(&resid)
}

fn information(x: &DMatrix<f64>, beta: &DVector<f64>) -> DMatrix<f64> {
    let eta = x * beta;
    let mut wx = x.clone();
    for (i, e) in eta.iter().enumerate() {
        let w = sigmoid(*e) * sigmoid(-*e);
        wx.row_mut(i).scale_mut(w);
    }
    x.tr_mul(&wx)
}

/// Maximum-likelihood logistic regression by Newton–Raphson with step halving.
///
/// Convergence requires the Newton step to vanish, so data whose MLE lies at
/// infinity (e.g. a constant outcome) keeps taking unit-size steps and ends in
/// [`RegressError::NotConverged`].
pub fn logistic_fit(x: &DMatrix<f64>, y: &[u8]) -> Result<LogisticFit, RegressError> {
    let (n, m) = x.shape();
    if y.len() != n {
        return Err(RegressError::DimensionMismatch(format!(
            "design has {n} rows, outcome has {}",
            y.len()
        )));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(RegressError::DimensionMismatch("outcome must be 0/1".into()));
    }
    let mut beta = DVector::zeros(m);
    let mut ll = logistic_loglik(x, y, &beta);
    for it in 1..=MAX_NEWTON_ITERATIONS {
        let g = logistic_gradient(x, y, &beta);
        let h = information(x, &beta);
        let step = h
            .cholesky()
            .ok_or_else(|| RegressError::RankDeficient("information matrix not positive definite".into()))?
            .solve(&g);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_HALVINGS {
            let cand = &beta + &step * t;
            let cand_ll = logistic_loglik(x, y, &cand);
            if cand_ll >= ll {
                beta = cand;
                ll = cand_ll;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        let step_size = step.amax() * t;
        if !accepted || step_size < STEP_TOL * (1.0 + beta.amax()) {
            let gradient_norm = logistic_gradient(x, y, &beta).norm() / n as f64;
            return Ok(LogisticFit {
                coeffs: beta,
                converged: true,
                iterations: it,
                log_likelihood: ll,
                gradient_norm,
            });
        }
    }
    Err(RegressError::NotConverged {
        iterations: MAX_NEWTON_ITERATIONS,
        gradient_norm: logistic_gradient(x, y, &beta).norm() / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::logit;
    use crate::rng;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn simulate(beta: &[f64], n: usize, seed: u64) -> (DMatrix<f64>, Vec<u8>) {
        let mut r = rng::stream(seed, 99);
        let x = DMatrix::from_fn(n, beta.len(), |_, j| {
            if j == 0 {
                1.0
            } else {
                StandardNormal.sample(&mut r)
            }
        });
        let eta = &x * DVector::from_column_slice(beta);
        let y = eta
            .iter()
            .map(|&e| u8::from(r.random::<f64>() < sigmoid(e)))
            .collect();
        (x, y)
    }

    #[test]
    fn constant_outcome_does_not_converge() {
        let x = DMatrix::from_element(50, 1, 1.0);
        match logistic_fit(&x, &[1u8; 50]) {
            Err(RegressError::NotConverged { iterations, .. }) => assert_eq!(iterations, 100),
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }

    #[test]
    fn intercept_only_recovers_logit_of_mean() {
        let n = 10_000;
        let ones = (n as f64 * 0.14) as usize;
        let y: Vec<u8> = (0..n).map(|i| u8::from(i < ones)).collect();
        let x = DMatrix::from_element(n, 1, 1.0);
        let fit = logistic_fit(&x, &y).unwrap();
        assert!(fit.converged);
        assert!((fit.coeffs[0] - logit(0.14)).abs() < 1e-6);
        assert!((fit.coeffs[0] + 1.815).abs() < 1e-3);
        assert!(fit.gradient_norm < 1e-8, "{}", fit.gradient_norm);
    }

    #[test]
    fn recovers_simulated_coefficients() {
        let (x, y) = simulate(&[-1.8, 1.0], 100_000, 1);
        let fit = logistic_fit(&x, &y).unwrap();
        assert!((fit.coeffs[0] + 1.8).abs() < 0.03, "{}", fit.coeffs);
        assert!((fit.coeffs[1] - 1.0).abs() < 0.03, "{}", fit.coeffs);
        assert!(fit.gradient_norm < 1e-8, "{}", fit.gradient_norm);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (x, y) = simulate(&[-0.5, 0.8, -0.3], 2_000, 2);
        let mut r = rng::stream(3, 0);
        for _ in 0..10 {
            let b = DVector::from_fn(3, |_, _| r.random_range(-1.0..1.0));
            let g = logistic_gradient(&x, &y, &b);
            for j in 0..3 {
                let h = 1e-5;
                let mut bp = b.clone();
                let mut bm = b.clone();
                bp[j] += h;
                bm[j] -= h;
                let fd = (logistic_loglik(&x, &y, &bp) - logistic_loglik(&x, &y, &bm)) / (2.0 * h);
                assert!((fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1.0), "{fd} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn newton_iterations_never_decrease_likelihood() {
        let (x, y) = simulate(&[2.0, 3.0], 500, 4);
        let fit = logistic_fit(&x, &y).unwrap();
        assert!(fit.log_likelihood >= logistic_loglik(&x, &y, &DVector::zeros(2)));
        assert!(fit.converged && fit.iterations < 30);
    }
}
