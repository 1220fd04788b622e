//! Synthetic diagnosis data from the logistic threshold model.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::rng::{self, streams};
use crate::threshold::ThresholdSpec;

/// Shape of the synthetic covariates: an intercept, `continuous` standard
/// normal columns and, optionally, the binary group indicator as a column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub continuous: usize,
    /// Probability that a row belongs to the second group.
    pub group_prob: f64,
    pub group_names: [String; 2],
    pub group_column: bool,
}

impl Default for CovariateSpec {
    fn default() -> Self {
        Self {
            continuous: 2,
            group_prob: 0.3,
            group_names: ["insured".into(), "uninsured".into()],
            group_column: true,
        }
    }
}

impl CovariateSpec {
    pub fn width(&self) -> usize {
        1 + self.continuous + usize::from(self.group_column)
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = vec!["intercept".to_string()];
        names.extend((1..=self.continuous).map(|k| format!("z{k}")));
        if self.group_column {
            names.push(self.group_names[1].clone());
        }
        names
    }
}

/// Binary-proxy observations: design matrix, group membership, proxy label
/// and, when known, the true label.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryProxyData {
    pub x: DMatrix<f64>,
    pub columns: Vec<String>,
    pub group: Vec<usize>,
    pub group_names: Vec<String>,
    pub y: Vec<u8>,
    pub truth: Option<Vec<u8>>,
}

impl BinaryProxyData {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Same rows with only the named design columns kept.
    pub fn select_columns(&self, keep: &[&str]) -> Result<Self, SimError> {
        let idx: Vec<usize> = keep
            .iter()
            .map(|k| {
                self.columns
                    .iter()
                    .position(|c| c == k)
                    .ok_or_else(|| SimError::MissingColumn((*k).to_string()))
            })
            .collect::<Result<_, _>>()?;
        let x = DMatrix::from_fn(self.len(), idx.len(), |i, j| self.x[(i, idx[j])]);
        Ok(Self {
            x,
            columns: keep.iter().map(|s| s.to_string()).collect(),
            ..self.clone()
        })
    }

    /// Same rows with the group column dropped from the design, if present.
    pub fn without_column(&self, name: &str) -> Self {
        let keep: Vec<&str> = self
            .columns
            .iter()
            .filter(|c| c.as_str() != name)
            .map(String::as_str)
            .collect();
        self.select_columns(&keep).expect("kept columns exist")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdDataset {
    pub x: DMatrix<f64>,
    pub columns: Vec<String>,
    pub group: Vec<usize>,
    pub group_names: Vec<String>,
    /// Latent severity.
    pub u1: Vec<f64>,
    /// True status, `u1 >= 0`.
    pub u3: Vec<u8>,
    /// Observed diagnosis.
    pub y: Vec<u8>,
    pub seed: u64,
}

impl ThresholdDataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn observed(&self) -> BinaryProxyData {
        BinaryProxyData {
            x: self.x.clone(),
            columns: self.columns.clone(),
            group: self.group.clone(),
            group_names: self.group_names.clone(),
            y: self.y.clone(),
            truth: Some(self.u3.clone()),
        }
    }

    /// `1 - P(y = 1 | g) / P(u3 = 1 | g)` estimated from the sample.
    pub fn undiagnosed_share(&self, group: usize) -> f64 {
        let (mut pos, mut diag) = (0usize, 0usize);
        for i in 0..self.len() {
            if self.group[i] == group {
                pos += self.u3[i] as usize;
                diag += self.y[i] as usize;
            }
        }
        1.0 - diag as f64 / pos as f64
    }
}

/// Draws `u1 ~ logistic(Xβ, 1)`, slack `e = |scale · z|` (or zero when
/// `with_slack` is false), diagnosis `y = [u1 ≥ τ(group) + e]` and truth
/// `u3 = [u1 ≥ 0]`.
pub fn simulate_threshold_dgp(
    coefs: &[f64],
    spec: &ThresholdSpec,
    n: usize,
    seed: u64,
    covariates: &CovariateSpec,
    with_slack: bool,
) -> Result<ThresholdDataset, SimError> {
    if n < 2 {
        return Err(SimError::TooFewRows(n));
    }
    let width = covariates.width();
    if coefs.len() != width {
        return Err(SimError::InvalidParameter(format!(
            "expected {width} coefficients, got {}",
            coefs.len()
        )));
    }
    let taus: Vec<f64> = covariates
        .group_names
        .iter()
        .map(|g| {
            spec.tau(g)
                .map_err(|_| SimError::InvalidParameter(format!("no threshold for group {g}")))
        })
        .collect::<Result<_, _>>()?;
    if taus.iter().any(|t| *t < 0.0) {
        return Err(SimError::InvalidParameter("thresholds must be >= 0".into()));
    }

    let mut rng = rng::stream(seed, streams::THRESHOLD_DGP);
    let mut x = DMatrix::zeros(n, width);
    let mut group = Vec::with_capacity(n);
    let mut u1 = Vec::with_capacity(n);
    let mut u3 = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        x[(i, 0)] = 1.0;
        for k in 0..covariates.continuous {
            x[(i, 1 + k)] = StandardNormal.sample(&mut rng);
        }
        let g = usize::from(rng.random::<f64>() < covariates.group_prob);
        if covariates.group_column {
            x[(i, width - 1)] = g as f64;
        }
        let lin: f64 = (0..width).map(|j| x[(i, j)] * coefs[j]).sum();
        let uu: f64 = rng.random_range(f64::EPSILON..1.0);
        let latent = lin + (uu / (1.0 - uu)).ln();
        let z: f64 = StandardNormal.sample(&mut rng);
        let e = if with_slack { (spec.e_scale * z).abs() } else { 0.0 };
        group.push(g);
        u1.push(latent);
        u3.push(u8::from(latent >= 0.0));
        y.push(u8::from(latent >= taus[g] + e));
    }
    Ok(ThresholdDataset {
        x,
        columns: covariates.column_names(),
        group,
        group_names: covariates.group_names.to_vec(),
        u1,
        u3,
        y,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{logit, sigmoid};

    fn intercept_only() -> CovariateSpec {
        CovariateSpec {
            continuous: 0,
            group_prob: 0.0,
            group_names: ["insured".into(), "uninsured".into()],
            group_column: false,
        }
    }

    #[test]
    fn zero_thresholds_without_slack_make_proxy_exact() {
        let spec = ThresholdSpec::new(-1.8, [("insured", 0.0), ("uninsured", 0.0)], 0.1).unwrap();
        let d = simulate_threshold_dgp(
            &[-1.0, 0.5, 0.5, 0.2],
            &spec,
            5000,
            1,
            &CovariateSpec::default(),
            false,
        )
        .unwrap();
        assert_eq!(d.y, d.u3);
    }

    #[test]
    fn prevalence_matches_intercept() {
        let spec = ThresholdSpec::new(logit(0.14), [("insured", 0.0), ("uninsured", 0.0)], 0.1)
            .unwrap();
        let d = simulate_threshold_dgp(&[logit(0.14)], &spec, 1_000_000, 2, &intercept_only(), true)
            .unwrap();
        let rate = d.u3.iter().map(|&v| v as f64).sum::<f64>() / d.len() as f64;
        assert!((rate - 0.14).abs() < 0.002, "rate {rate}");
        assert!((sigmoid(logit(0.14)) - 0.14).abs() < 1e-15);
    }

    #[test]
    fn undiagnosed_share_for_insured_threshold() {
        let spec = ThresholdSpec::new(-1.8, [("insured", 0.21), ("uninsured", 0.38)], 0.1).unwrap();
        let d = simulate_threshold_dgp(&[-1.8], &spec, 1_000_000, 3, &intercept_only(), false)
            .unwrap();
        // 1 - σ(-1.8 - 0.21) / σ(-1.8)
        let expected = 1.0 - sigmoid(-2.01) / sigmoid(-1.8);
        assert!((expected - 0.167).abs() < 0.001);
        assert!((d.undiagnosed_share(0) - 0.167).abs() < 0.005);
    }

    #[test]
    fn never_a_false_positive() {
        let spec = ThresholdSpec::new(-1.8, [("insured", 0.2), ("uninsured", 0.4)], 0.3).unwrap();
        let d = simulate_threshold_dgp(
            &[-1.5, 1.0, -0.5, 0.3],
            &spec,
            20_000,
            4,
            &CovariateSpec::default(),
            true,
        )
        .unwrap();
        assert!(d.y.iter().zip(&d.u3).all(|(y, u)| y <= u));
        assert!(d.y.iter().zip(&d.u3).any(|(y, u)| y < u));
        assert_eq!(
            d,
            simulate_threshold_dgp(
                &[-1.5, 1.0, -0.5, 0.3],
                &spec,
                20_000,
                4,
                &CovariateSpec::default(),
                true
            )
            .unwrap()
        );
    }

    #[test]
    fn coefficient_count_is_checked() {
        let spec = ThresholdSpec::new(-1.8, [("insured", 0.2), ("uninsured", 0.4)], 0.1).unwrap();
        assert!(simulate_threshold_dgp(&[0.0], &spec, 10, 0, &CovariateSpec::default(), true)
            .is_err());
    }
}
