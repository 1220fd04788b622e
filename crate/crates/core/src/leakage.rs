//! Gaussian leakage measurement model.
//!
//! ```text
//! u0 | x      ~ normal(xβ, σ_u)
//! u1 | u0, x  ~ normal(xβ + η(u0 − xβ), σ_u √(1 − η²))
//! y_t | u_t, x ~ normal(xα + γ u_t, σ_y)
//! ```
//!
//! The latents are integrated out in closed form, so the sampler only sees
//! `(α, γ, β, η, σ_y)`; `σ_u` is treated as known.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::{covariance, variance, LN_2PI};
use crate::sampler::{
    sample_posterior, ParamSpace, PosteriorSamples, SamplerConfig, SamplerError, Support,
};
use crate::simdata::SemDataset;

/// Posterior draws used for prediction.
pub const PREDICTION_DRAWS: usize = 400;

pub const PARAM_NAMES: [&str; 5] = ["alpha", "gamma", "beta", "eta", "sigma_y"];

#[derive(Debug, Error)]
pub enum LeakageError {
    #[error("covariance is not positive definite at {0:?}")]
    NonPositiveDefiniteCovariance(LeakageParams),
    #[error("parameters outside their support: {0}")]
    OutOfSupport(String),
    #[error("dataset has no rows")]
    EmptyData,
    #[error("unknown prediction mode {0:?} (expected filtering or smoothing)")]
    UnknownMode(String),
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("sampler did not converge (max R-hat {max_rhat:.3})")]
    NotConverged {
        max_rhat: f64,
        samples: Box<PosteriorSamples>,
    },
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakageParams {
    pub alpha: f64,
    pub gamma: f64,
    pub beta: f64,
    pub eta: f64,
    pub sigma_y: f64,
    pub sigma_u: f64,
}

impl LeakageParams {
    pub fn validate(&self) -> Result<(), LeakageError> {
        let finite = [self.alpha, self.gamma, self.beta, self.eta, self.sigma_y, self.sigma_u]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.eta.abs() >= 1.0 || self.sigma_y <= 0.0 || self.sigma_u <= 0.0 {
            return Err(LeakageError::OutOfSupport(format!("{self:?}")));
        }
        Ok(())
    }

    fn from_slice(v: &[f64; 5], sigma_u: f64) -> Self {
        Self {
            alpha: v[0],
            gamma: v[1],
            beta: v[2],
            eta: v[3],
            sigma_y: v[4],
            sigma_u,
        }
    }

    /// Shared slope of both proxies on `x`.
    fn slope(&self) -> f64 {
        self.alpha + self.gamma * self.beta
    }

    /// Marginal proxy variance and the covariance between the two proxies.
    fn proxy_moments(&self) -> (f64, f64) {
        let lat = self.gamma * self.gamma * self.sigma_u * self.sigma_u;
        (lat + self.sigma_y * self.sigma_y, lat * self.eta)
    }
}

/// `Σ log N((y0_i, y1_i) | x_i(α + γβ)·(1, 1), γ²σ_u²[[1, η], [η, 1]] + σ_y² I)`.
pub fn marginal_loglik(params: &LeakageParams, data: &SemDataset) -> Result<f64, LeakageError> {
    params.validate()?;
    if data.is_empty() {
        return Err(LeakageError::EmptyData);
    }
    let (a, c) = params.proxy_moments();
    let det = a * a - c * c;
    if !(det > 0.0) {
        return Err(LeakageError::NonPositiveDefiniteCovariance(*params));
    }
    let k = params.slope();
    let mut quad = 0.0;
    for i in 0..data.len() {
        let r0 = data.y0[i] - k * data.x[i];
        let r1 = data.y1[i] - k * data.x[i];
        quad += a * (r0 * r0 + r1 * r1) - 2.0 * c * r0 * r1;
    }
    let n = data.len() as f64;
    Ok(-n * (LN_2PI + 0.5 * det.ln()) - 0.5 * quad / det)
}

/// Cross-products that determine the marginal likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SufficientStats {
    n: f64,
    xx: f64,
    x0: f64,
    x1: f64,
    s00: f64,
    s11: f64,
    s01: f64,
}

impl SufficientStats {
    pub fn new(data: &SemDataset) -> Self {
        let mut s = Self {
            n: data.len() as f64,
            xx: 0.0,
            x0: 0.0,
            x1: 0.0,
            s00: 0.0,
            s11: 0.0,
            s01: 0.0,
        };
        for i in 0..data.len() {
            let (x, y0, y1) = (data.x[i], data.y0[i], data.y1[i]);
            s.xx += x * x;
            s.x0 += x * y0;
            s.x1 += x * y1;
            s.s00 += y0 * y0;
            s.s11 += y1 * y1;
            s.s01 += y0 * y1;
        }
        s
    }

    /// Same value as [`marginal_loglik`]; `-inf` outside the support.
    pub fn loglik(&self, p: &LeakageParams) -> f64 {
        let (a, c) = p.proxy_moments();
        let det = a * a - c * c;
        if !(det > 0.0) {
            return f64::NEG_INFINITY;
        }
        let k = p.slope();
        let rr0 = self.s00 - 2.0 * k * self.x0 + k * k * self.xx;
        let rr1 = self.s11 - 2.0 * k * self.x1 + k * k * self.xx;
        let r01 = self.s01 - k * (self.x0 + self.x1) + k * k * self.xx;
        let quad = a * (rr0 + rr1) - 2.0 * c * r01;
        -self.n * (LN_2PI + 0.5 * det.ln()) - 0.5 * quad / det
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Prior {
    Normal { mean: f64, sd: f64 },
    /// Normal with mean zero truncated to the positive half-line.
    HalfNormal { sd: f64 },
    /// The parameter is fixed at this value and not sampled.
    PointMass { value: f64 },
}

impl Prior {
    /// Log-density up to a constant.
    pub fn log_density(&self, v: f64) -> f64 {
        match *self {
            Prior::Normal { mean, sd } => -0.5 * ((v - mean) / sd).powi(2),
            Prior::HalfNormal { sd } if v > 0.0 => -0.5 * (v / sd).powi(2),
            Prior::HalfNormal { .. } => f64::NEG_INFINITY,
            Prior::PointMass { value } if v == value => 0.0,
            Prior::PointMass { .. } => f64::NEG_INFINITY,
        }
    }

    /// A representative value: the mean, or the fixed value.
    pub fn center(&self) -> f64 {
        match *self {
            Prior::Normal { mean, .. } => mean,
            Prior::HalfNormal { sd } => sd * (2.0 / std::f64::consts::PI).sqrt(),
            Prior::PointMass { value } => value,
        }
    }

    fn validate(&self, name: &str) -> Result<(), LeakageError> {
        let ok = match *self {
            Prior::Normal { mean, sd } => mean.is_finite() && sd > 0.0 && sd.is_finite(),
            Prior::HalfNormal { sd } => sd > 0.0 && sd.is_finite(),
            Prior::PointMass { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(LeakageError::InvalidPrior(format!("{name}: {self:?}")))
        }
    }
}

/// Strong priors on `β` and `γ`, weak ones on the rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakagePriors {
    pub alpha: Prior,
    pub gamma: Prior,
    pub beta: Prior,
    pub eta: Prior,
    pub sigma_y: Prior,
}

impl LeakagePriors {
    /// Strong priors centred on the given values with sd 0.1.
    pub fn centered(beta: f64, gamma: f64) -> Self {
        Self {
            alpha: Prior::Normal { mean: 0.0, sd: 1.0 },
            gamma: Prior::Normal { mean: gamma, sd: 0.1 },
            beta: Prior::Normal { mean: beta, sd: 0.1 },
            eta: Prior::Normal { mean: 0.0, sd: 0.2 },
            sigma_y: Prior::HalfNormal { sd: 1.0 },
        }
    }

    fn as_array(&self) -> [Prior; 5] {
        [self.alpha, self.gamma, self.beta, self.eta, self.sigma_y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MisspecifiedParam {
    Beta,
    Gamma,
}

impl FromStr for MisspecifiedParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "beta" => Ok(Self::Beta),
            "gamma" => Ok(Self::Gamma),
            other => Err(format!("expected beta or gamma, got {other:?}")),
        }
    }
}

/// Correctly centred priors with the chosen strong prior moved to `m` times
/// its true value; the width stays 0.1.
pub fn misspecify_priors(
    beta_true: f64,
    gamma_true: f64,
    m: f64,
    which: MisspecifiedParam,
) -> LeakagePriors {
    assert!(m > 0.0, "misspecification factor must be positive");
    let mut priors = LeakagePriors::centered(beta_true, gamma_true);
    match which {
        MisspecifiedParam::Beta => priors.beta = Prior::Normal { mean: m * beta_true, sd: 0.1 },
        MisspecifiedParam::Gamma => priors.gamma = Prior::Normal { mean: m * gamma_true, sd: 0.1 },
    }
    priors
}

/// Sampling coordinates. The likelihood sees the parameters only through the
/// proxy slope `k = α + γβ`, the proxy variance `a = γ²σ_u² + σ_y²` and the
/// proxy covariance `c = γ²σ_u²η`, so free `α`, `η` and `σ_y` are sampled as
/// `k`, `c` and `a`. Fixed parameters keep their natural value in their slot.
struct Coordinates {
    free: [bool; 5],
    fixed: [f64; 5],
    sigma_u: f64,
}

impl Coordinates {
    fn new(priors: &LeakagePriors, sigma_u: f64) -> Self {
        let arr = priors.as_array();
        let mut fixed = [0.0; 5];
        let mut free = [true; 5];
        for j in 0..5 {
            if let Prior::PointMass { value } = arr[j] {
                fixed[j] = value;
                free[j] = false;
            }
        }
        Self { free, fixed, sigma_u }
    }

    fn free_indices(&self) -> Vec<usize> {
        (0..5).filter(|&j| self.free[j]).collect()
    }

    /// Natural parameters and the log-Jacobian of the map, or `None` outside
    /// the support.
    fn natural(&self, coords: &[f64; 5]) -> Option<([f64; 5], f64)> {
        let mut v = *coords;
        self.pin_fixed(&mut v);
        let (gamma, beta) = (v[1], v[2]);
        let lat = gamma * gamma * self.sigma_u * self.sigma_u;
        let mut log_jac = 0.0;
        if self.free[0] {
            v[0] = coords[0] - gamma * beta;
        }
        if self.free[3] {
            if !(lat > 0.0) {
                return None;
            }
            v[3] = coords[3] / lat;
            log_jac -= lat.ln();
        }
        if self.free[4] {
            let var = coords[4] - lat;
            if !(var > 0.0) {
                return None;
            }
            v[4] = var.sqrt();
            log_jac -= (2.0 * v[4]).ln();
        }
        (v[3].abs() < 1.0).then_some((v, log_jac))
    }

    /// Starting coordinates from the proxy moments with `β` at its prior
    /// centre and `γ` at its centre moved just enough to keep `|η| ≤ 0.9`.
    fn init(&self, stats: &SufficientStats, data: &SemDataset, priors: &LeakagePriors) -> [f64; 5] {
        let k = if stats.xx > 0.0 {
            (stats.x0 + stats.x1) / (2.0 * stats.xx)
        } else {
            0.0
        };
        let r0: Vec<f64> = (0..data.len()).map(|i| data.y0[i] - k * data.x[i]).collect();
        let r1: Vec<f64> = (0..data.len()).map(|i| data.y1[i] - k * data.x[i]).collect();
        let (var, cov) = if data.len() > 2 {
            (0.5 * (variance(&r0) + variance(&r1)), covariance(&r0, &r1))
        } else {
            (1.0, 0.0)
        };
        let su2 = self.sigma_u * self.sigma_u;
        let mut gamma = priors.gamma.center();
        if self.free[1] && self.free[3] {
            let lo = (cov.abs() / (0.9 * su2)).sqrt();
            let hi = (0.99 * var / su2).sqrt().max(lo);
            let sign = if gamma < 0.0 { -1.0 } else { 1.0 };
            gamma = sign * gamma.abs().clamp(lo, hi);
        }
        let mut c = [
            k,
            gamma,
            priors.beta.center(),
            cov.clamp(-0.9 * gamma * gamma * su2, 0.9 * gamma * gamma * su2),
            var.max(gamma * gamma * su2 * 1.01 + 1e-6),
        ];
        self.pin_fixed(&mut c);
        c
    }

    fn pin_fixed(&self, v: &mut [f64; 5]) {
        for ((slot, free), fixed) in v.iter_mut().zip(self.free).zip(self.fixed) {
            if !free {
                *slot = fixed;
            }
        }
    }
}

/// Posterior over `(α, γ, β, η, σ_y)` with `σ_u` fixed. Point-mass priors hold
/// their parameter fixed; it is reported as a constant column.
pub fn fit_leakage(
    data: &SemDataset,
    priors: &LeakagePriors,
    sigma_u: f64,
    config: &SamplerConfig,
) -> Result<PosteriorSamples, LeakageError> {
    if data.is_empty() {
        return Err(LeakageError::EmptyData);
    }
    if !(sigma_u > 0.0 && sigma_u.is_finite()) {
        return Err(LeakageError::OutOfSupport(format!("sigma_u = {sigma_u}")));
    }
    let prior_arr = priors.as_array();
    for (p, name) in prior_arr.iter().zip(PARAM_NAMES) {
        p.validate(name)?;
    }
    let stats = SufficientStats::new(data);
    let coords = Coordinates::new(priors, sigma_u);
    let init_full = coords.init(&stats, data, priors);
    let free = coords.free_indices();

    let assemble = |theta: &[f64]| {
        let mut full = init_full;
        for (slot, &j) in free.iter().enumerate() {
            full[j] = theta[slot];
        }
        full
    };
    let density = |theta: &[f64]| {
        let Some((v, log_jac)) = coords.natural(&assemble(theta)) else {
            return f64::NEG_INFINITY;
        };
        let lp: f64 = free.iter().map(|&j| prior_arr[j].log_density(v[j])).sum();
        if !lp.is_finite() {
            return f64::NEG_INFINITY;
        }
        lp + log_jac + stats.loglik(&LeakageParams::from_slice(&v, sigma_u))
    };

    let natural_init = coords
        .natural(&init_full)
        .ok_or_else(|| LeakageError::OutOfSupport(format!("initial point {init_full:?}")))?
        .0;
    let chains = if free.is_empty() {
        fixed_chains(&natural_init, config)
    } else {
        let n = data.len() as f64;
        let names = ["slope", "gamma", "beta", "proxy_cov", "proxy_var"];
        let supports = [Support::Real, Support::Real, Support::Real, Support::Real, Support::Positive];
        let scales = [2.0 / n.sqrt(), 0.1, 0.1, 2.0 / n.sqrt(), 2.0 / n.sqrt()];
        let space = free.iter().fold(ParamSpace::new(), |s, &j| {
            s.with(names[j], supports[j], scales[j])
        });
        let init: Vec<f64> = free.iter().map(|&j| init_full[j]).collect();
        let mut chains = sample_posterior(&density, &space, &init, config)?;
        for draws in chains.draws.iter_mut() {
            for d in draws.iter_mut() {
                let (v, _) = coords
                    .natural(&assemble(d))
                    .expect("accepted draws lie in the support");
                *d = v.to_vec();
            }
        }
        chains.param_names = PARAM_NAMES.iter().map(|s| s.to_string()).collect();
        chains
    };
    let samples = PosteriorSamples::new(chains);
    let max_rhat = samples.max_rhat();
    if max_rhat >= 1.05 {
        return Err(LeakageError::NotConverged {
            max_rhat,
            samples: Box::new(samples),
        });
    }
    Ok(samples)
}

fn fixed_chains(values: &[f64; 5], config: &SamplerConfig) -> crate::sampler::Chains {
    crate::sampler::Chains {
        draws: vec![vec![values.to_vec(); config.draws]; config.chains],
        accept_rate: vec![0.0; config.chains],
        param_names: PARAM_NAMES.iter().map(|s| s.to_string()).collect(),
        seed: config.seed,
        support_violations: 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionMode {
    /// Condition on `(x, y0)`.
    #[default]
    Filtering,
    /// Condition on `(x, y0, y1)`.
    Smoothing,
}

impl FromStr for PredictionMode {
    type Err = LeakageError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "filtering" => Ok(Self::Filtering),
            "smoothing" => Ok(Self::Smoothing),
            other => Err(LeakageError::UnknownMode(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentPrediction {
    pub mean: f64,
    pub sd: f64,
}

/// Gaussian conditional mean and variance of `u1` for one parameter draw.
pub fn conditional_latent(
    p: &LeakageParams,
    x: f64,
    y0: f64,
    y1: Option<f64>,
) -> (f64, f64) {
    let (a, c) = p.proxy_moments();
    let su2 = p.sigma_u * p.sigma_u;
    let prior_mean = x * p.beta;
    let k = p.slope();
    let r0 = y0 - x * k;
    // covariances of u1 with y0 and y1
    let c0 = p.gamma * p.eta * su2;
    let c1 = p.gamma * su2;
    match y1 {
        None => (prior_mean + c0 / a * r0, su2 - c0 * c0 / a),
        Some(y1) => {
            let r1 = y1 - x * k;
            let det = a * a - c * c;
            let w0 = (a * c0 - c * c1) / det;
            let w1 = (a * c1 - c * c0) / det;
            (prior_mean + w0 * r0 + w1 * r1, su2 - w0 * c0 - w1 * c1)
        }
    }
}

/// Posterior-averaged prediction of `u1` for every row, with the sd combining
/// within-draw and between-draw variance.
pub fn predict_latent(
    samples: &PosteriorSamples,
    sigma_u: f64,
    data: &SemDataset,
    mode: PredictionMode,
) -> Result<Vec<LatentPrediction>, LeakageError> {
    if data.is_empty() {
        return Err(LeakageError::EmptyData);
    }
    let idx: Vec<usize> = PARAM_NAMES
        .iter()
        .map(|name| {
            samples
                .chains
                .index_of(name)
                .ok_or_else(|| LeakageError::OutOfSupport(format!("samples lack {name}")))
        })
        .collect::<Result<_, _>>()?;
    let params: Vec<LeakageParams> = samples
        .thinned(PREDICTION_DRAWS)
        .into_iter()
        .map(|d| LeakageParams::from_slice(&std::array::from_fn(|j| d[idx[j]]), sigma_u))
        .collect();
    let draws = params.len() as f64;
    Ok((0..data.len())
        .map(|i| {
            let y1 = match mode {
                PredictionMode::Filtering => None,
                PredictionMode::Smoothing => Some(data.y1[i]),
            };
            let (mut s, mut s2, mut v) = (0.0, 0.0, 0.0);
            for p in &params {
                let (m, var) = conditional_latent(p, data.x[i], data.y0[i], y1);
                s += m;
                s2 += m * m;
                v += var;
            }
            let mean = s / draws;
            let between = (s2 / draws - mean * mean).max(0.0);
            LatentPrediction {
                mean,
                sd: (v / draws + between).max(0.0).sqrt(),
            }
        })
        .collect())
}
