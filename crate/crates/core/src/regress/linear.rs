use nalgebra::{DMatrix, DVector};

use super::RegressError;

/// Least-squares fit of an outcome on a design whose first column is the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit {
    pub coeffs: DVector<f64>,
    /// `XᵀX / n`, the sample estimate of `E(XᵀX)` per row.
    pub xtx: DMatrix<f64>,
    /// Residual sum of squares over `n - m`.
    pub residual_variance: f64,
}

impl LinearFit {
    pub fn predict(&self, x: &DMatrix<f64>) -> DVector<f64> {
        x * &self.coeffs
    }
}

/// Regression of the measurement error `e = y - u` on `[X u]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementCoeffs {
    pub alpha_p: DVector<f64>,
    pub gamma_p: f64,
}

impl MeasurementCoeffs {
    pub fn zero(m: usize) -> Self {
        Self {
            alpha_p: DVector::zeros(m),
            gamma_p: 0.0,
        }
    }

    /// `γβ + α`, the coefficient shift that proxy labels induce.
    pub fn shift(&self, beta: &DVector<f64>) -> DVector<f64> {
        beta * self.gamma_p + &self.alpha_p
    }
}

const RANK_TOL: f64 = 1e-10;

/// Solves `min ‖Xw − y‖²` through a Householder QR factorisation.
pub fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>, RegressError> {
    let (n, m) = x.shape();
    if y.len() != n {
        return Err(RegressError::DimensionMismatch(format!(
            "design has {n} rows, outcome has {}",
            y.len()
        )));
    }
    if n <= m {
        return Err(RegressError::RankDeficient(format!("{n} rows for {m} columns")));
    }
    let qr = x.clone().qr();
    let r = qr.r();
    let max_diag = r.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for j in 0..m {
        let d = r[(j, j)].abs();
        if !(d > RANK_TOL * max_diag) {
            return Err(RegressError::RankDeficient(format!(
                "column {j} is (numerically) a combination of earlier columns"
            )));
        }
    }
    let mut qty = y.clone();
    qr.q_tr_mul(&mut qty);
    let top = qty.rows(0, m).into_owned();
    r.solve_upper_triangular(&top)
        .ok_or_else(|| RegressError::RankDeficient("singular triangular factor".into()))
}

pub fn ols_fit(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LinearFit, RegressError> {
    let coeffs = least_squares(x, y)?;
    let (n, m) = x.shape();
    let resid = y - x * &coeffs;
    Ok(LinearFit {
        xtx: x.tr_mul(x) / n as f64,
        residual_variance: resid.norm_squared() / (n - m) as f64,
        coeffs,
    })
}

pub fn measurement_regression(
    x: &DMatrix<f64>,
    u: &DVector<f64>,
    y: &DVector<f64>,
) -> Result<MeasurementCoeffs, RegressError> {
    let m = x.ncols();
    let mut design = x.clone().insert_column(m, 0.0);
    design.column_mut(m).copy_from(u);
    let e = y - u;
    let w = least_squares(&design, &e)?;
    Ok(MeasurementCoeffs {
        alpha_p: w.rows(0, m).into_owned(),
        gamma_p: w[m],
    })
}

/// Population solution of regressing the proxy on `X`: `(1 + γ)β + α`.
pub fn proxy_solution(beta: &DVector<f64>, mc: &MeasurementCoeffs) -> DVector<f64> {
    beta * (1.0 + mc.gamma_p) + &mc.alpha_p
}

/// `−(γβ + α)ᵀ E(XᵀX)`: covariance between the proxy-trained prediction error
/// and each covariate.
pub fn prediction_error_covariance(
    beta: &DVector<f64>,
    mc: &MeasurementCoeffs,
    xtx: &DMatrix<f64>,
) -> DVector<f64> {
    -(xtx.transpose() * mc.shift(beta))
}

/// `mse_true + (γβ + α)ᵀ E(XᵀX) (γβ + α)`.
pub fn mse_lower_bound(
    mse_true: f64,
    beta: &DVector<f64>,
    mc: &MeasurementCoeffs,
    xtx: &DMatrix<f64>,
) -> f64 {
    let d = mc.shift(beta);
    mse_true + (d.transpose() * xtx * &d)[(0, 0)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simdata::{simulate_sem, standardize_sem};
    use proptest::prelude::*;

    fn col(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn exact_interpolation() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let fit = ols_fit(&x, &col(&[0.0, 1.0, 2.0])).unwrap();
        assert!((fit.coeffs[0]).abs() < 1e-14);
        assert!((fit.coeffs[1] - 1.0).abs() < 1e-14);
        assert!(fit.residual_variance < 1e-28);
    }

    #[test]
    fn collinear_design_is_rank_deficient() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        assert!(matches!(
            ols_fit(&x, &col(&[1.0, 2.0, 3.0, 4.0])),
            Err(RegressError::RankDeficient(_))
        ));
    }

    #[test]
    fn residuals_are_orthogonal_to_columns() {
        let p = standardize_sem(0.3, 0.4, 0.4, 0.5).unwrap();
        let d = simulate_sem(&p, 20_000, 1).unwrap();
        let x = d.design();
        let y = col(&d.y1);
        let fit = ols_fit(&x, &y).unwrap();
        let r = &y - fit.predict(&x);
        let g = x.tr_mul(&r) / d.len() as f64;
        assert!(g.amax() < 1e-8);
    }

    #[test]
    fn noiseless_proxy_fit_equals_truth_fit() {
        let p = standardize_sem(0.3, 0.0, 1.0, 0.0).unwrap();
        let d = simulate_sem(&p, 1000, 2).unwrap();
        let x = d.design();
        let a = ols_fit(&x, &col(&d.y1)).unwrap();
        let b = ols_fit(&x, &col(&d.u1)).unwrap();
        assert_eq!(a.coeffs, b.coeffs);
    }

    #[test]
    fn proxy_slope_matches_population_value() {
        let p = standardize_sem(0.3, 0.4, 0.4, 0.5).unwrap();
        let d = simulate_sem(&p, 100_000, 3).unwrap();
        let fit = ols_fit(&d.design(), &col(&d.y0)).unwrap();
        assert!((fit.coeffs[1] - p.implied_proxy_slope()).abs() < 0.02);
    }

    #[test]
    fn measurement_regression_cases() {
        let p = standardize_sem(0.2, 0.4, 0.4, 0.5).unwrap();
        let d = simulate_sem(&p, 100_000, 4).unwrap();
        let x = d.design();
        let u = col(&d.u1);
        let zero = measurement_regression(&x, &u, &u).unwrap();
        assert!(zero.gamma_p.abs() < 1e-12 && zero.alpha_p.amax() < 1e-12);

        let mc = measurement_regression(&x, &u, &col(&d.y1)).unwrap();
        assert!((mc.gamma_p - (p.gamma - 1.0)).abs() < 0.02);
        assert!((mc.alpha_p[1] - p.alpha).abs() < 0.02);
        assert!(mc.alpha_p[0].abs() < 0.02);

        let constant = DVector::from_element(d.len(), 2.5);
        assert!(matches!(
            measurement_regression(&x, &constant, &col(&d.y1)),
            Err(RegressError::RankDeficient(_))
        ));
    }

    #[test]
    fn proxy_solution_hand_values() {
        let beta = col(&[0.0, 0.2]);
        assert_eq!(proxy_solution(&beta, &MeasurementCoeffs::zero(2)), beta);
        let mc = MeasurementCoeffs {
            alpha_p: col(&[0.0, 0.4]),
            gamma_p: -0.6,
        };
        let w = proxy_solution(&beta, &mc);
        assert!(w[0].abs() < 1e-15 && (w[1] - 0.48).abs() < 1e-15);
    }

    #[test]
    fn proxy_solution_matches_direct_fit() {
        let p = standardize_sem(0.2, 0.4, 0.4, 0.5).unwrap();
        let d = simulate_sem(&p, 100_000, 5).unwrap();
        let x = d.design();
        let truth = ols_fit(&x, &col(&d.u1)).unwrap();
        let proxy = ols_fit(&x, &col(&d.y1)).unwrap();
        let mc = measurement_regression(&x, &col(&d.u1), &col(&d.y1)).unwrap();
        let w = proxy_solution(&truth.coeffs, &mc);
        assert!((w - &proxy.coeffs).amax() < 0.02);
        // population value: [0, α + γβ]
        assert!((proxy.coeffs[1] - 0.48).abs() < 0.02);
    }

    #[test]
    fn zero_measurement_error_gives_trivial_formulas() {
        let beta = col(&[0.1, 0.3]);
        let xtx = DMatrix::identity(2, 2);
        let mc = MeasurementCoeffs::zero(2);
        assert_eq!(prediction_error_covariance(&beta, &mc, &xtx), DVector::zeros(2));
        assert_eq!(mse_lower_bound(0.7, &beta, &mc, &xtx), 0.7);
    }

    #[test]
    fn error_covariance_matches_monte_carlo() {
        let p = standardize_sem(0.2, 0.4, 0.4, 0.5).unwrap();
        let d = simulate_sem(&p, 100_000, 6).unwrap();
        let (analytic, empirical, se) = covariance_oracle(&d.design(), &d.u1, &d.y1);
        for j in 0..2 {
            assert!((analytic[j] - empirical[j]).abs() <= 3.0 * se[j] + 1e-12);
        }
    }

    #[test]
    fn error_covariance_scales_quadratically_with_covariate() {
        // Rescaling X by c rescales the slope part of E(XᵀX) by c², the slope
        // coefficients by 1/c, so the covariate entry scales by c.
        let p = standardize_sem(0.2, 0.4, 0.4, 0.5).unwrap();
        let d = simulate_sem(&p, 50_000, 7).unwrap();
        let c = 3.0;
        let x = d.design();
        let mut xs = x.clone();
        xs.column_mut(1).scale_mut(c);
        let cov = |x: &DMatrix<f64>| {
            let b = ols_fit(x, &col(&d.u1)).unwrap().coeffs;
            let mc = measurement_regression(x, &col(&d.u1), &col(&d.y1)).unwrap();
            prediction_error_covariance(&b, &mc, &(x.tr_mul(x) / d.len() as f64))
        };
        let (a, b) = (cov(&x), cov(&xs));
        assert!((b[1] - c * a[1]).abs() < 1e-9);
        assert!((b[0] - a[0]).abs() < 1e-9);
        // and the quadratic form E(XᵀX) entry scales by c²
        let xtx = xs.tr_mul(&xs)[(1, 1)] / x.tr_mul(&x)[(1, 1)];
        assert!((xtx - c * c).abs() < 1e-9);
    }

    #[test]
    fn mse_bound_holds_empirically() {
        let p = standardize_sem(0.3, 0.4, 0.6, 0.5).unwrap();
        let d = simulate_sem(&p, 100_000, 8).unwrap();
        let x = d.design();
        let u = col(&d.u1);
        let truth = ols_fit(&x, &u).unwrap();
        let proxy = ols_fit(&x, &col(&d.y1)).unwrap();
        let mc = measurement_regression(&x, &u, &col(&d.y1)).unwrap();
        let n = d.len() as f64;
        let mse_true = (&u - truth.predict(&x)).norm_squared() / n;
        let sq: Vec<f64> = (&u - proxy.predict(&x)).iter().map(|r| r * r).collect();
        let mse_proxy = sq.iter().sum::<f64>() / n;
        let se = (crate::math::variance(&sq) / n).sqrt();
        let bound = mse_lower_bound(mse_true, &truth.coeffs, &mc, &truth.xtx);
        assert!(mse_proxy >= bound - 3.0 * se);
    }

    /// Independent route: the empirical `(1/n) Σ (u − ŷ_proxy) xᵀ` with its
    /// Monte Carlo standard error, against the population formula evaluated
    /// from the SEM moments of the sample.
    fn covariance_oracle(x: &DMatrix<f64>, u: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = u.len();
        let uv = col(u);
        let proxy = ols_fit(x, &col(y)).unwrap();
        let err = &uv - proxy.predict(x);
        let truth = ols_fit(x, &uv).unwrap();
        let mc = measurement_regression(x, &uv, &col(y)).unwrap();
        let analytic = prediction_error_covariance(&truth.coeffs, &mc, &truth.xtx);
        let mut empirical = Vec::new();
        let mut se = Vec::new();
        for j in 0..x.ncols() {
            let terms: Vec<f64> = (0..n).map(|i| err[i] * x[(i, j)]).collect();
            empirical.push(terms.iter().sum::<f64>() / n as f64);
            se.push((crate::math::variance(&terms) / n as f64).sqrt());
        }
        (analytic.iter().copied().collect(), empirical, se)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn quadratic_term_is_nonnegative(
            b0 in -2.0f64..2.0, b1 in -2.0f64..2.0,
            a0 in -2.0f64..2.0, a1 in -2.0f64..2.0, g in -2.0f64..2.0,
            seed in 0u64..1000,
        ) {
            let p = standardize_sem(0.2, 0.3, 0.3, 0.1).unwrap();
            let d = simulate_sem(&p, 50, seed).unwrap();
            let x = d.design();
            let xtx = x.tr_mul(&x) / 50.0;
            let mc = MeasurementCoeffs { alpha_p: col(&[a0, a1]), gamma_p: g };
            prop_assert!(mse_lower_bound(0.0, &col(&[b0, b1]), &mc, &xtx) >= -1e-12);
        }
    }
}
