//! Adaptive random-walk Metropolis over a user-supplied log-density.
//!
//! Parameters are declared with a [`Support`]; the sampler works on the
//! unconstrained scale and adds the log-Jacobian of each transform, so the
//! caller writes the density in natural coordinates. During warmup the
//! proposal covariance is re-estimated at the end of every adaptation window
//! and its overall scale follows a Robbins–Monro recursion towards the target
//! acceptance rate. After warmup the kernel is frozen.

mod diagnostics;
mod transform;

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use diagnostics::{effective_sample_size, ess, rhat, split_rhat};
pub use transform::Support;

use crate::rng::{self, streams, StreamRng};

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("log-density is not finite at the initial point {0:?}")]
    NonFiniteDensityAtInit(Vec<f64>),
    #[error("chain {chain} rejected every post-warmup proposal")]
    AllProposalsRejected { chain: usize },
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup: usize,
    pub draws: usize,
    pub seed: u64,
    pub initial_step_scale: f64,
    pub adapt_window: usize,
    pub target_accept: f64,
    /// Half-width of the uniform jitter applied to each chain's starting
    /// point, in units of each parameter's scale hint.
    pub init_jitter: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            warmup: 1000,
            draws: 1000,
            seed: 0,
            initial_step_scale: 0.1,
            adapt_window: 100,
            target_accept: 0.3,
            init_jitter: 1.0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        let bad = |m: &str| Err(SamplerError::InvalidConfig(m.to_string()));
        if self.chains < 2 {
            return bad("need at least 2 chains");
        }
        if self.draws < 100 {
            return bad("need at least 100 draws per chain");
        }
        if self.adapt_window == 0 || self.warmup < self.adapt_window {
            return bad("warmup must be at least one adaptation window");
        }
        if !(self.initial_step_scale > 0.0) {
            return bad("initial_step_scale must be positive");
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return bad("target_accept must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub support: Support,
    /// Rough posterior scale on the unconstrained axis, used for the first
    /// adaptation window.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamSpace {
    pub params: Vec<ParamSpec>,
}

impl ParamSpace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, support: Support, scale: f64) -> Self {
        self.params.push(ParamSpec {
            name: name.to_string(),
            support,
            scale,
        });
        self
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.params.iter().map(|p| p.name.clone()).collect()
    }

    fn constrain(&self, theta: &[f64], out: &mut [f64]) -> f64 {
        let mut log_jac = 0.0;
        for ((p, t), o) in self.params.iter().zip(theta).zip(out.iter_mut()) {
            *o = p.support.constrain(*t);
            log_jac += p.support.log_jacobian(*t);
        }
        log_jac
    }

    fn in_support(&self, x: &[f64]) -> bool {
        self.params.iter().zip(x).all(|(p, v)| p.support.contains(*v))
    }
}

/// Post-warmup draws on the constrained scale, `draws[chain][iteration][param]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chains {
    pub draws: Vec<Vec<Vec<f64>>>,
    pub accept_rate: Vec<f64>,
    pub param_names: Vec<String>,
    pub seed: u64,
    /// Proposals whose constrained value fell outside the declared support.
    pub support_violations: usize,
}

impl Chains {
    pub fn n_chains(&self) -> usize {
        self.draws.len()
    }

    pub fn n_draws(&self) -> usize {
        self.draws.first().map_or(0, Vec::len)
    }

    pub fn n_params(&self) -> usize {
        self.param_names.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.param_names.iter().position(|n| n == name)
    }

    /// Draws of one parameter, one vector per chain.
    pub fn param(&self, p: usize) -> Vec<Vec<f64>> {
        self.draws
            .iter()
            .map(|c| c.iter().map(|d| d[p]).collect())
            .collect()
    }

    /// All draws, chain by chain.
    pub fn iter_draws(&self) -> impl Iterator<Item = &[f64]> {
        self.draws.iter().flat_map(|c| c.iter().map(Vec::as_slice))
    }

    pub fn mean(&self, p: usize) -> f64 {
        let total = (self.n_chains() * self.n_draws()) as f64;
        self.iter_draws().map(|d| d[p]).sum::<f64>() / total
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let d = self.n_params();
        let mu: Vec<f64> = (0..d).map(|p| self.mean(p)).collect();
        let mut cov = DMatrix::zeros(d, d);
        let mut count = 0.0;
        for draw in self.iter_draws() {
            count += 1.0;
            for i in 0..d {
                for j in 0..d {
                    cov[(i, j)] += (draw[i] - mu[i]) * (draw[j] - mu[j]);
                }
            }
        }
        cov / (count - 1.0)
    }
}

/// Runs `config.chains` independent chains targeting `logdensity`, which
/// receives constrained parameter values. Chains may run in parallel; results
/// are ordered by chain index and depend only on `config.seed`.
pub fn sample_posterior<F>(
    logdensity: &F,
    space: &ParamSpace,
    init: &[f64],
    config: &SamplerConfig,
) -> Result<Chains, SamplerError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    config.validate()?;
    if init.len() != space.dim() || space.dim() == 0 {
        return Err(SamplerError::InvalidConfig(format!(
            "init has {} values for {} parameters",
            init.len(),
            space.dim()
        )));
    }
    if !space.in_support(init) || !logdensity(init).is_finite() {
        return Err(SamplerError::NonFiniteDensityAtInit(init.to_vec()));
    }
    let theta0: Vec<f64> = space
        .params
        .iter()
        .zip(init)
        .map(|(p, x)| p.support.unconstrain(*x))
        .collect();

    let results: Vec<ChainRun> = (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(logdensity, space, &theta0, config, c))
        .collect();

    let mut chains = Chains {
        draws: Vec::with_capacity(config.chains),
        accept_rate: Vec::with_capacity(config.chains),
        param_names: space.names(),
        seed: config.seed,
        support_violations: 0,
    };
    for (c, run) in results.into_iter().enumerate() {
        if run.accepted == 0 {
            return Err(SamplerError::AllProposalsRejected { chain: c });
        }
        chains.accept_rate.push(run.accepted as f64 / config.draws as f64);
        chains.support_violations += run.violations;
        chains.draws.push(run.draws);
    }
    Ok(chains)
}

struct ChainRun {
    draws: Vec<Vec<f64>>,
    accepted: usize,
    violations: usize,
}

struct Target<'a, F> {
    logdensity: &'a F,
    space: &'a ParamSpace,
    scratch: Vec<f64>,
    violations: usize,
}

impl<F: Fn(&[f64]) -> f64> Target<'_, F> {
    /// Log-density on the unconstrained scale.
    fn eval(&mut self, theta: &[f64]) -> f64 {
        let log_jac = self.space.constrain(theta, &mut self.scratch);
        if !self.space.in_support(&self.scratch) {
            self.violations += 1;
            return f64::NEG_INFINITY;
        }
        let lp = (self.logdensity)(&self.scratch) + log_jac;
        if lp.is_nan() {
            f64::NEG_INFINITY
        } else {
            lp
        }
    }
}

/// Running mean and scatter of warmup draws within one adaptation window.
struct Welford {
    n: usize,
    mean: DVector<f64>,
    scatter: DMatrix<f64>,
}

impl Welford {
    fn new(d: usize) -> Self {
        Self {
            n: 0,
            mean: DVector::zeros(d),
            scatter: DMatrix::zeros(d, d),
        }
    }

    fn push(&mut self, x: &DVector<f64>) {
        self.n += 1;
        let delta = x - &self.mean;
        self.mean += &delta / self.n as f64;
        let delta2 = x - &self.mean;
        self.scatter += &delta * delta2.transpose();
    }

    fn covariance(&self) -> DMatrix<f64> {
        &self.scatter / (self.n as f64 - 1.0)
    }
}

fn run_chain<F>(
    logdensity: &F,
    space: &ParamSpace,
    theta0: &[f64],
    config: &SamplerConfig,
    chain: usize,
) -> ChainRun
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let d = space.dim();
    let mut rng = rng::stream(config.seed, streams::CHAIN_BASE + chain as u64);
    let mut target = Target {
        logdensity,
        space,
        scratch: vec![0.0; d],
        violations: 0,
    };

    let mut theta = DVector::from_column_slice(theta0);
    let mut lp = target.eval(theta.as_slice());
    for _ in 0..100 {
        let cand = DVector::from_fn(d, |i, _| {
            theta0[i] + rng.random_range(-1.0..=1.0) * config.init_jitter * space.params[i].scale
        });
        let cand_lp = target.eval(cand.as_slice());
        if cand_lp.is_finite() {
            theta = cand;
            lp = cand_lp;
            break;
        }
    }

    let mut chol = DMatrix::from_diagonal(&DVector::from_iterator(
        d,
        space.params.iter().map(|p| p.scale),
    ));
    let mut log_scale = config.initial_step_scale.ln();
    let mut window = Welford::new(d);
    let mut window_accepts = 0usize;
    let mut since_update = 0usize;

    let step = |theta: &mut DVector<f64>,
                    lp: &mut f64,
                    chol: &DMatrix<f64>,
                    log_scale: f64,
                    rng: &mut StreamRng,
                    target: &mut Target<'_, F>|
     -> (bool, f64) {
        let z = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut *rng));
        let prop = &*theta + chol * z * log_scale.exp();
        let prop_lp = target.eval(prop.as_slice());
        let log_ratio = prop_lp - *lp;
        let accept_prob = if log_ratio >= 0.0 { 1.0 } else { log_ratio.exp() };
        let u: f64 = rng.random();
        if u < accept_prob {
            *theta = prop;
            *lp = prop_lp;
            (true, accept_prob)
        } else {
            (false, accept_prob)
        }
    };

    for t in 0..config.warmup {
        let (accepted, prob) = step(&mut theta, &mut lp, &chol, log_scale, &mut rng, &mut target);
        window_accepts += usize::from(accepted);
        since_update += 1;
        log_scale += (prob - config.target_accept) / (since_update as f64).powf(0.6);
        window.push(&theta);

        let window_done = (t + 1) % config.adapt_window == 0;
        if window_done && t + 1 < config.warmup {
            if window_accepts > d + 1 {
                let mut cov = window.covariance();
                let ridge = 1e-8 * (cov.trace() / d as f64).max(1e-12);
                for i in 0..d {
                    cov[(i, i)] += ridge;
                }
                if let Some(c) = cov.cholesky() {
                    chol = c.l();
                    log_scale = (2.38 / (d as f64).sqrt()).ln();
                    since_update = 0;
                }
            }
            window = Welford::new(d);
            window_accepts = 0;
        }
    }

    let mut draws = Vec::with_capacity(config.draws);
    let mut accepted_total = 0usize;
    let mut x = vec![0.0; d];
    for _ in 0..config.draws {
        let (accepted, _) = step(&mut theta, &mut lp, &chol, log_scale, &mut rng, &mut target);
        accepted_total += usize::from(accepted);
        space.constrain(theta.as_slice(), &mut x);
        draws.push(x.clone());
    }
    ChainRun {
        draws,
        accepted: accepted_total,
        violations: target.violations,
    }
}

/// Chains bundled with their convergence diagnostics.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub chains: Chains,
    pub rhat: Vec<f64>,
    pub ess: Vec<f64>,
}

impl std::fmt::Debug for PosteriorSamples {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PosteriorSamples")
            .field("params", &self.chains.param_names)
            .field("chains", &self.chains.n_chains())
            .field("draws", &self.chains.n_draws())
            .field("rhat", &self.rhat)
            .field("ess", &self.ess)
            .finish()
    }
}

impl PosteriorSamples {
    pub fn new(chains: Chains) -> Self {
        let rhat = rhat(&chains);
        let ess = ess(&chains);
        Self { chains, rhat, ess }
    }

    pub fn max_rhat(&self) -> f64 {
        self.rhat.iter().copied().fold(1.0, f64::max)
    }

    pub fn mean(&self, name: &str) -> Option<f64> {
        self.chains.index_of(name).map(|p| self.chains.mean(p))
    }

    pub fn draws_of(&self, name: &str) -> Option<Vec<f64>> {
        self.chains
            .index_of(name)
            .map(|p| self.chains.iter_draws().map(|d| d[p]).collect())
    }

    /// At most `max` draws, evenly spaced through the pooled chains.
    pub fn thinned(&self, max: usize) -> Vec<&[f64]> {
        let all: Vec<&[f64]> = self.chains.iter_draws().collect();
        if all.len() <= max || max == 0 {
            return all;
        }
        (0..max).map(|k| all[k * all.len() / max]).collect()
    }

    /// One row per draw: `chain,iteration,<params…>`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "chain,iteration,{}", self.chains.param_names.join(","))?;
        for (c, chain) in self.chains.draws.iter().enumerate() {
            for (i, d) in chain.iter().enumerate() {
                let vals: Vec<String> = d.iter().map(|v| v.to_string()).collect();
                writeln!(out, "{c},{i},{}", vals.join(","))?;
            }
        }
        Ok(())
    }
}
