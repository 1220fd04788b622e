//! Logistic threshold measurement model.
//!
//! Latent severity `u1 ~ logistic(xβ, 1)`; the proxy fires when
//! `u1 ≥ τ(group) + e` with half-normal slack `e`, and the true status is
//! `u3 = [u1 ≥ 0]`. Thresholds are stored as `τ ≥ 0`, so a proxy positive is
//! always a true positive.

mod slack;

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{compensated_sum, log_sigmoid, logit, sigmoid};
use crate::regress::{logistic_fit, RegressError};
use crate::sampler::{
    sample_posterior, ParamSpace, PosteriorSamples, SamplerConfig, SamplerError, Support,
};
use crate::simdata::BinaryProxyData;

pub use slack::SlackIntegral;

/// Default prior standard deviation on each regression coefficient.
pub const BETA_PRIOR_SD: f64 = 2.5;
/// Posterior draws used for prediction.
pub const PREDICTION_DRAWS: usize = 200;

#[derive(Debug, Error)]
pub enum ThresholdError {
    #[error("group {0:?} has no threshold in the spec")]
    UnknownGroup(String),
    #[error("invalid threshold spec: {0}")]
    InvalidSpec(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("sampler did not converge (max R-hat {max_rhat:.3})")]
    NotConverged {
        max_rhat: f64,
        samples: Box<PosteriorSamples>,
    },
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Regress(#[from] RegressError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSpec {
    pub base_alpha: f64,
    pub tau_by_group: BTreeMap<String, f64>,
    pub e_scale: f64,
}

impl ThresholdSpec {
    pub fn new<I, S>(base_alpha: f64, taus: I, e_scale: f64) -> Result<Self, ThresholdError>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let spec = Self {
            base_alpha,
            tau_by_group: taus.into_iter().map(|(g, t)| (g.into(), t)).collect(),
            e_scale,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), ThresholdError> {
        if !(self.e_scale > 0.0 && self.e_scale.is_finite()) {
            return Err(ThresholdError::InvalidSpec(format!(
                "e_scale must be positive, got {}",
                self.e_scale
            )));
        }
        if !self.base_alpha.is_finite() {
            return Err(ThresholdError::InvalidSpec("base_alpha is not finite".into()));
        }
        for (g, t) in &self.tau_by_group {
            if !(*t >= 0.0 && t.is_finite()) {
                return Err(ThresholdError::InvalidSpec(format!(
                    "threshold for {g:?} must be >= 0, got {t}"
                )));
            }
        }
        Ok(())
    }

    pub fn tau(&self, group: &str) -> Result<f64, ThresholdError> {
        self.tau_by_group
            .get(group)
            .copied()
            .ok_or_else(|| ThresholdError::UnknownGroup(group.to_string()))
    }

    /// Thresholds for each row of `data`.
    pub fn row_taus(&self, data: &BinaryProxyData) -> Result<Vec<f64>, ThresholdError> {
        let by_index: Vec<f64> = data
            .group_names
            .iter()
            .map(|g| self.tau(g))
            .collect::<Result<_, _>>()?;
        data.group
            .iter()
            .map(|&g| {
                by_index.get(g).copied().ok_or_else(|| {
                    ThresholdError::InvalidData(format!("group index {g} has no name"))
                })
            })
            .collect()
    }
}

/// Intercept whose logistic latent is nonnegative with probability `total_rate`.
pub fn solve_base_rate(total_rate: f64) -> f64 {
    logit(total_rate)
}

/// Undiagnosed share `1 − σ(α − τ)/σ(α)` ignoring slack.
pub fn undiagnosed_share(alpha: f64, tau: f64) -> f64 {
    1.0 - sigmoid(alpha - tau) / sigmoid(alpha)
}

/// Undiagnosed share with the slack marginalized out.
pub fn undiagnosed_share_with_slack(alpha: f64, tau: f64, slack: &SlackIntegral) -> f64 {
    1.0 - slack.prob(alpha - tau) / sigmoid(alpha)
}

/// `τ ≥ 0` with `undiagnosed_share(alpha, τ) = share`, by bisection.
pub fn solve_threshold(alpha: f64, share: f64) -> f64 {
    assert!((0.0..1.0).contains(&share), "share must lie in [0, 1)");
    if share == 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while undiagnosed_share(alpha, hi) < share {
        hi *= 2.0;
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if undiagnosed_share(alpha, mid) < share {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub group: String,
    pub target_share: f64,
    pub tau: f64,
    /// Share implied by `τ` once the slack is included.
    pub share_with_slack: f64,
}

/// Builds a spec from a total prevalence and per-group undiagnosed shares.
/// Thresholds ignore the slack; the slack-inclusive share is reported alongside.
pub fn calibrate(
    base_alpha: f64,
    shares: &[(String, f64)],
    e_scale: f64,
) -> Result<(ThresholdSpec, Vec<CalibrationRow>), ThresholdError> {
    let slack = SlackIntegral::new(e_scale);
    let mut rows = Vec::with_capacity(shares.len());
    for (g, share) in shares {
        if !(0.0..1.0).contains(share) {
            return Err(ThresholdError::InvalidSpec(format!(
                "undiagnosed share for {g:?} must lie in [0, 1), got {share}"
            )));
        }
        let tau = solve_threshold(base_alpha, *share);
        rows.push(CalibrationRow {
            group: g.clone(),
            target_share: *share,
            tau,
            share_with_slack: undiagnosed_share_with_slack(base_alpha, tau, &slack),
        });
    }
    let spec = ThresholdSpec::new(
        base_alpha,
        rows.iter().map(|r| (r.group.clone(), r.tau)),
        e_scale,
    )?;
    Ok((spec, rows))
}

fn check_conformable(beta: &DVector<f64>, data: &BinaryProxyData) -> Result<(), ThresholdError> {
    if data.is_empty() {
        return Err(ThresholdError::InvalidData("no rows".into()));
    }
    if beta.len() != data.x.ncols() {
        return Err(ThresholdError::InvalidData(format!(
            "{} coefficients for {} design columns",
            beta.len(),
            data.x.ncols()
        )));
    }
    Ok(())
}

/// Bernoulli log-likelihood of the proxy with slack marginalized by direct
/// quadrature at every row.
pub fn threshold_loglik(
    beta: &DVector<f64>,
    data: &BinaryProxyData,
    spec: &ThresholdSpec,
) -> Result<f64, ThresholdError> {
    check_conformable(beta, data)?;
    let taus = spec.row_taus(data)?;
    let slack = SlackIntegral::new(spec.e_scale);
    let eta = &data.x * beta;
    Ok(compensated_sum((0..data.len()).map(|i| {
        let (lp, lq) = slack.log_probs_exact(eta[i] - taus[i]);
        if data.y[i] == 1 {
            lp
        } else {
            lq
        }
    })))
}

/// Likelihood evaluator with precomputed thresholds and an interpolated slack
/// integral, used for optimization and sampling.
pub struct ThresholdLikelihood<'a> {
    data: &'a BinaryProxyData,
    taus: Vec<f64>,
    slack: SlackIntegral,
}

impl<'a> ThresholdLikelihood<'a> {
    pub fn new(data: &'a BinaryProxyData, spec: &ThresholdSpec) -> Result<Self, ThresholdError> {
        spec.validate()?;
        Ok(Self {
            data,
            taus: spec.row_taus(data)?,
            slack: SlackIntegral::new(spec.e_scale),
        })
    }

    pub fn loglik(&self, beta: &DVector<f64>) -> f64 {
        let eta = &self.data.x * beta;
        compensated_sum(eta.iter().zip(&self.taus).zip(&self.data.y).map(|((e, t), y)| {
            let (lp, lq) = self.slack.log_probs(e - t);
            if *y == 1 {
                lp
            } else {
                lq
            }
        }))
    }

    /// Log-likelihood, gradient and expected information.
    pub fn derivatives(&self, beta: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let x = &self.data.x;
        let eta = x * beta;
        let n = self.data.len();
        let mut score = DVector::zeros(n);
        let mut weight = DVector::zeros(n);
        let mut total = 0.0;
        for i in 0..n {
            let v = self.slack.interpolate(eta[i] - self.taus[i]);
            if self.data.y[i] == 1 {
                total += v[0];
                score[i] = v[1];
            } else {
                total += v[2];
                score[i] = v[3];
            }
            weight[i] = -v[1] * v[3];
        }
        let grad = x.transpose() * score;
        let mut weighted = x.clone();
        for mut col in weighted.column_iter_mut() {
            col.component_mul_assign(&weight);
        }
        let info = x.transpose() * weighted;
        (total, grad, info)
    }
}

fn log_prior(beta: &[f64], sd: f64) -> f64 {
    beta.iter().map(|b| -0.5 * (b / sd) * (b / sd)).sum()
}

/// Posterior mode under independent `N(0, sd²)` priors by Fisher scoring.
/// Returns the mode and the inverse of the penalized information there.
pub fn threshold_map(
    lik: &ThresholdLikelihood<'_>,
    prior_sd: f64,
) -> Result<(DVector<f64>, DMatrix<f64>), ThresholdError> {
    let m = lik.data.x.ncols();
    let objective =
        |b: &DVector<f64>| lik.loglik(b) + log_prior(b.as_slice(), prior_sd);
    let mut beta = DVector::zeros(m);
    let mut current = objective(&beta);
    let penalty = DMatrix::from_diagonal_element(m, m, 1.0 / (prior_sd * prior_sd));
    for _ in 0..200 {
        let (_, grad, info) = lik.derivatives(&beta);
        let grad = grad - &beta / (prior_sd * prior_sd);
        let h = info + &penalty;
        let chol = h.cholesky().ok_or_else(|| {
            ThresholdError::InvalidData("information matrix is not positive definite".into())
        })?;
        let mut step = chol.solve(&grad);
        let mut improved = false;
        for _ in 0..30 {
            let cand = &beta + &step;
            let value = objective(&cand);
            if value >= current {
                beta = cand;
                current = value;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved || step.norm() < 1e-10 {
            break;
        }
    }
    let (_, _, info) = lik.derivatives(&beta);
    let cov = (info + penalty)
        .try_inverse()
        .ok_or_else(|| ThresholdError::InvalidData("singular information matrix".into()))?;
    Ok((beta, cov))
}

/// Posterior over `β` for fixed thresholds under `N(0, prior_sd²)` priors.
pub fn fit_threshold(
    data: &BinaryProxyData,
    spec: &ThresholdSpec,
    prior_sd: f64,
    config: &SamplerConfig,
) -> Result<PosteriorSamples, ThresholdError> {
    if data.x.ncols() == 0 {
        return Err(ThresholdError::InvalidData("empty design".into()));
    }
    check_conformable(&DVector::zeros(data.x.ncols()), data)?;
    let lik = ThresholdLikelihood::new(data, spec)?;
    let (mode, cov) = threshold_map(&lik, prior_sd)?;

    let space = data.columns.iter().enumerate().fold(ParamSpace::new(), |s, (j, c)| {
        s.with(c, Support::Real, cov[(j, j)].sqrt())
    });
    let density = |b: &[f64]| {
        lik.loglik(&DVector::from_column_slice(b)) + log_prior(b, prior_sd)
    };
    let chains = sample_posterior(&density, &space, mode.as_slice(), config)?;
    let samples = PosteriorSamples::new(chains);
    let max_rhat = samples.max_rhat();
    if max_rhat >= 1.05 {
        return Err(ThresholdError::NotConverged {
            max_rhat,
            samples: Box::new(samples),
        });
    }
    Ok(samples)
}

/// Plain logistic regression coefficients on the same design, for comparison.
pub fn proxy_logistic(data: &BinaryProxyData) -> Result<DVector<f64>, ThresholdError> {
    Ok(logistic_fit(&data.x, &data.y)?.coeffs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskPrediction {
    /// `P(u3 = 1 | x, y)`, or the marginal risk when `y` is unobserved.
    pub p_true: f64,
    /// `P(u3 = 1 | x)`.
    pub p_marginal: f64,
    pub sd_true: f64,
    pub sd_marginal: f64,
}

/// `P(u3 = 1 | η, τ, y)` for a single parameter draw.
fn conditional_risk(eta: f64, tau: f64, y: Option<u8>, slack: &SlackIntegral) -> f64 {
    match y {
        Some(1) => 1.0,
        Some(_) => {
            // (σ(η) − g) / (1 − g) = 1 − σ(−η) / (1 − g)
            let (_, log_miss) = slack.log_probs(eta - tau);
            (1.0 - (log_sigmoid(-eta) - log_miss).exp()).clamp(0.0, 1.0)
        }
        None => sigmoid(eta),
    }
}

struct Moments {
    n: f64,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    fn new() -> Self {
        Self { n: 0.0, sum: 0.0, sum_sq: 0.0 }
    }
    fn push(&mut self, v: f64) {
        self.n += 1.0;
        self.sum += v;
        self.sum_sq += v * v;
    }
    fn mean(&self) -> f64 {
        self.sum / self.n
    }
    fn sd(&self) -> f64 {
        if self.n < 2.0 {
            return 0.0;
        }
        let m = self.mean();
        ((self.sum_sq - self.n * m * m) / (self.n - 1.0)).max(0.0).sqrt()
    }
}

/// Risk for one covariate row, averaged over (at most `PREDICTION_DRAWS`)
/// posterior draws.
pub fn predict_risk(
    samples: &PosteriorSamples,
    x: &[f64],
    group: &str,
    y: Option<u8>,
    spec: &ThresholdSpec,
) -> Result<RiskPrediction, ThresholdError> {
    let tau = spec.tau(group)?;
    let slack = SlackIntegral::new(spec.e_scale);
    let draws = samples.thinned(PREDICTION_DRAWS);
    if draws.first().is_some_and(|d| d.len() != x.len()) {
        return Err(ThresholdError::InvalidData(format!(
            "{} covariates for {} coefficients",
            x.len(),
            draws[0].len()
        )));
    }
    let (mut t, mut m) = (Moments::new(), Moments::new());
    for beta in draws {
        let eta: f64 = beta.iter().zip(x).map(|(b, v)| b * v).sum();
        t.push(conditional_risk(eta, tau, y, &slack));
        m.push(sigmoid(eta));
    }
    Ok(RiskPrediction {
        p_true: t.mean(),
        p_marginal: m.mean(),
        sd_true: t.sd(),
        sd_marginal: m.sd(),
    })
}

/// Risk for every row of `data`, conditioning on its observed proxy.
pub fn predict_risk_batch(
    samples: &PosteriorSamples,
    data: &BinaryProxyData,
    spec: &ThresholdSpec,
) -> Result<Vec<RiskPrediction>, ThresholdError> {
    let taus = spec.row_taus(data)?;
    let slack = SlackIntegral::new(spec.e_scale);
    let draws = samples.thinned(PREDICTION_DRAWS);
    check_conformable(&DVector::from_column_slice(draws[0]), data)?;
    let n = data.len();
    let mut t: Vec<Moments> = (0..n).map(|_| Moments::new()).collect();
    let mut m: Vec<Moments> = (0..n).map(|_| Moments::new()).collect();
    for beta in draws {
        let eta = &data.x * DVector::from_column_slice(beta);
        for i in 0..n {
            t[i].push(conditional_risk(eta[i], taus[i], Some(data.y[i]), &slack));
            m[i].push(sigmoid(eta[i]));
        }
    }
    Ok(t.iter()
        .zip(&m)
        .map(|(t, m)| RiskPrediction {
            p_true: t.mean(),
            p_marginal: m.mean(),
            sd_true: t.sd(),
            sd_marginal: m.sd(),
        })
        .collect())
}

/// Writes `row_id,group,y,p_true,p_marginal,sd` with `sd` the posterior spread
/// of the marginal risk.
pub fn write_risk_csv<W: Write>(
    preds: &[RiskPrediction],
    data: &BinaryProxyData,
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "row_id,group,y,p_true,p_marginal,sd")?;
    for (i, p) in preds.iter().enumerate() {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            i,
            data.group_names[data.group[i]],
            data.y[i],
            p.p_true,
            p.p_marginal,
            p.sd_marginal
        )?;
    }
    Ok(())
}
