//! `beta-sweep` and `misspec-sweep`: prediction of the latent outcome from
//! simulated SEM data by regression baselines and the leakage model.
//!
//! Every model is fitted and evaluated on the same simulated sample; the
//! evaluation target is the true latent `u1`.

use std::io::Write;

use anyhow::{ensure, Result};
use labelbias_core::leakage::{
    fit_leakage, misspecify_priors, predict_latent, LeakageError, MisspecifiedParam,
};
use labelbias_core::metrics::{error_covariate_correlation, rmse};
use labelbias_core::regress::ols_fit;
use labelbias_core::rng::child_seed;
use labelbias_core::simdata::{simulate_sem, standardize_sem};
use labelbias_core::{LeakagePriors, PosteriorSamples, PredictionMode, SamplerConfig, SemDataset};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::Seeded;
use crate::output::{cell, OutputDir};

/// Chain lengths the five-parameter leakage posterior needs for R̂ < 1.05.
pub fn leakage_sampler() -> SamplerConfig {
    SamplerConfig {
        warmup: 2000,
        draws: 4000,
        ..Default::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelScore {
    pub model: String,
    pub rmse: f64,
    pub corr_error_x: f64,
    /// Convergence diagnostic for sampled models.
    pub max_rhat: Option<f64>,
}

/// Fit quality of one sampled leakage model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeakageEval {
    pub score: ModelScore,
    pub posterior_mean_beta: f64,
    pub posterior_mean_gamma: f64,
}

fn score(model: &str, data: &SemDataset, pred: &[f64], max_rhat: Option<f64>) -> Result<ModelScore> {
    Ok(ModelScore {
        model: model.to_string(),
        rmse: rmse(&data.u1, pred)?,
        corr_error_x: error_covariate_correlation(&data.u1, pred, &data.x)?,
        max_rhat,
    })
}

fn ols_predict(cols: &[&[f64]], target: &[f64]) -> Result<Vec<f64>> {
    let n = target.len();
    let x = DMatrix::from_fn(n, cols.len() + 1, |i, j| if j == 0 { 1.0 } else { cols[j - 1][i] });
    let fit = ols_fit(&x, &DVector::from_column_slice(target))?;
    Ok(fit.predict(&x).as_slice().to_vec())
}

/// Accepts a posterior whose chains did not reach R̂ < 1.05, reporting R̂.
fn posterior(result: Result<PosteriorSamples, LeakageError>) -> Result<PosteriorSamples> {
    match result {
        Ok(s) => Ok(s),
        Err(LeakageError::NotConverged { max_rhat, samples }) => {
            eprintln!("warning: leakage chains not converged (max R-hat {max_rhat:.3})");
            Ok(*samples)
        }
        Err(e) => Err(e.into()),
    }
}

/// Fits the leakage model on `fit_data` and scores its predictions of `u1`
/// against `eval`, which shares rows with `fit_data`.
pub fn evaluate_leakage(
    model: &str,
    fit_data: &SemDataset,
    eval: &SemDataset,
    priors: &LeakagePriors,
    sigma_u: f64,
    sampler: &SamplerConfig,
    mode: PredictionMode,
) -> Result<LeakageEval> {
    let samples = posterior(fit_leakage(fit_data, priors, sigma_u, sampler))?;
    let pred: Vec<f64> = predict_latent(&samples, sigma_u, fit_data, mode)?
        .iter()
        .map(|p| p.mean)
        .collect();
    Ok(LeakageEval {
        score: score(model, eval, &pred, Some(samples.max_rhat()))?,
        posterior_mean_beta: samples.mean("beta").unwrap_or(f64::NAN),
        posterior_mean_gamma: samples.mean("gamma").unwrap_or(f64::NAN),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BetaSweepConfig {
    pub seed: u64,
    pub replicates: usize,
    pub betas: Vec<f64>,
    pub alpha: f64,
    pub gamma: f64,
    pub eta: f64,
    pub n: usize,
    pub mode: PredictionMode,
    pub sampler: SamplerConfig,
}

impl Default for BetaSweepConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            replicates: 3,
            betas: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
            alpha: 0.4,
            gamma: 0.4,
            eta: 0.2,
            n: 10_000,
            mode: PredictionMode::Filtering,
            sampler: leakage_sampler(),
        }
    }
}

impl Seeded for BetaSweepConfig {
    fn seed_mut(&mut self) -> &mut u64 {
        &mut self.seed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaSweepRow {
    pub replicate: usize,
    pub seed: u64,
    pub beta: f64,
    pub scores: Vec<ModelScore>,
}

impl BetaSweepRow {
    pub fn model(&self, name: &str) -> Option<&ModelScore> {
        self.scores.iter().find(|s| s.model == name)
    }
}

pub const BETA_SWEEP_MODELS: [&str; 5] = ["simple", "complex", "leakage", "leakage_no_x", "oracle"];

/// One sweep point: regression baselines predict the proxy `y1`, the leakage
/// model predicts `u1` directly, and the oracle regresses the true `u1` on the
/// complex model's regressors.
pub fn beta_point(config: &BetaSweepConfig, beta: f64, seed: u64) -> Result<Vec<ModelScore>> {
    let p = standardize_sem(beta, config.alpha, config.gamma, config.eta)?;
    let data = simulate_sem(&p, config.n, seed)?;
    let sampler = SamplerConfig {
        seed: child_seed(seed, 1),
        ..config.sampler.clone()
    };
    let priors = LeakagePriors::centered(beta, config.gamma);

    let simple = ols_predict(&[&data.y0], &data.y1)?;
    let complex = ols_predict(&[&data.y0, &data.x], &data.y1)?;
    let oracle = ols_predict(&[&data.y0, &data.x], &data.u1)?;
    let leakage = evaluate_leakage("leakage", &data, &data, &priors, p.sigma_u, &sampler, config.mode)?;
    // Without the covariate, u1 is centred with its full marginal variance.
    let no_x = data.without_covariate();
    let leakage_no_x = evaluate_leakage(
        "leakage_no_x",
        &no_x,
        &data,
        &priors,
        p.implied_var_u().sqrt(),
        &sampler,
        config.mode,
    )?;
    Ok(vec![
        score("simple", &data, &simple, None)?,
        score("complex", &data, &complex, None)?,
        leakage.score,
        leakage_no_x.score,
        score("oracle", &data, &oracle, None)?,
    ])
}

pub fn run_beta_sweep(config: &BetaSweepConfig) -> Result<Vec<BetaSweepRow>> {
    ensure!(config.replicates > 0, "replicates must be positive");
    ensure!(!config.betas.is_empty(), "empty beta grid");
    for &b in &config.betas {
        standardize_sem(b, config.alpha, config.gamma, config.eta)
            .map_err(|e| anyhow::anyhow!("beta = {b}: {e}"))?;
    }
    let mut rows = Vec::new();
    for rep in 0..config.replicates {
        let rep_seed = child_seed(config.seed, rep as u64);
        for (i, &beta) in config.betas.iter().enumerate() {
            let seed = child_seed(rep_seed, i as u64);
            rows.push(BetaSweepRow {
                replicate: rep,
                seed,
                beta,
                scores: beta_point(config, beta, seed)?,
            });
        }
    }
    Ok(rows)
}

fn write_score(w: &mut impl Write, prefix: &str, s: &ModelScore) -> std::io::Result<()> {
    writeln!(w, "{prefix},{},rmse,{}", s.model, cell(s.rmse))?;
    writeln!(w, "{prefix},{},corr_error_x,{}", s.model, cell(s.corr_error_x))?;
    if let Some(r) = s.max_rhat {
        writeln!(w, "{prefix},{},max_rhat,{}", s.model, cell(r))?;
    }
    Ok(())
}

pub fn write_beta_sweep(rows: &[BetaSweepRow], out: &OutputDir) -> Result<()> {
    let mut w = out.csv("beta_sweep.csv")?;
    writeln!(w, "replicate,seed,beta,model,metric,value")?;
    for r in rows {
        let prefix = format!("{},{},{}", r.replicate, r.seed, r.beta);
        for s in &r.scores {
            write_score(&mut w, &prefix, s)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MisspecConfig {
    pub seed: u64,
    pub replicates: usize,
    pub params: Vec<MisspecifiedParam>,
    pub factors: Vec<f64>,
    pub beta_true: f64,
    pub gamma_true: f64,
    pub alpha: f64,
    pub eta: f64,
    pub n: usize,
    pub mode: PredictionMode,
    pub sampler: SamplerConfig,
}

impl Default for MisspecConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            replicates: 3,
            params: vec![MisspecifiedParam::Beta, MisspecifiedParam::Gamma],
            factors: vec![0.5, 0.75, 1.0, 1.25, 1.5],
            beta_true: 0.2,
            gamma_true: 0.4,
            alpha: 0.4,
            eta: 0.2,
            n: 100_000,
            mode: PredictionMode::Filtering,
            sampler: leakage_sampler(),
        }
    }
}

impl Seeded for MisspecConfig {
    fn seed_mut(&mut self) -> &mut u64 {
        &mut self.seed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MisspecRow {
    pub param: MisspecifiedParam,
    pub m: f64,
    pub replicate: usize,
    pub seed: u64,
    pub eval: LeakageEval,
}

/// Every factor of a replicate reuses the same sample and chain seed, so rows
/// differ only through the prior.
pub fn run_misspec_sweep(config: &MisspecConfig) -> Result<Vec<MisspecRow>> {
    ensure!(config.replicates > 0, "replicates must be positive");
    ensure!(config.factors.iter().all(|&m| m > 0.0), "factors must be positive");
    let p = standardize_sem(config.beta_true, config.alpha, config.gamma_true, config.eta)?;
    let mut rows = Vec::new();
    for rep in 0..config.replicates {
        let seed = child_seed(config.seed, rep as u64);
        let data = simulate_sem(&p, config.n, seed)?;
        let sampler = SamplerConfig {
            seed: child_seed(seed, 1),
            ..config.sampler.clone()
        };
        for &param in &config.params {
            for &m in &config.factors {
                let priors = misspecify_priors(config.beta_true, config.gamma_true, m, param);
                let eval = evaluate_leakage("leakage", &data, &data, &priors, p.sigma_u, &sampler, config.mode)?;
                rows.push(MisspecRow {
                    param,
                    m,
                    replicate: rep,
                    seed,
                    eval,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_misspec_sweep(rows: &[MisspecRow], out: &OutputDir) -> Result<()> {
    let mut w = out.csv("misspec_sweep.csv")?;
    writeln!(w, "param,m,replicate,seed,model,metric,value")?;
    for r in rows {
        let param = match r.param {
            MisspecifiedParam::Beta => "beta",
            MisspecifiedParam::Gamma => "gamma",
        };
        let prefix = format!("{param},{},{},{}", r.m, r.replicate, r.seed);
        write_score(&mut w, &prefix, &r.eval.score)?;
        writeln!(w, "{prefix},leakage,posterior_mean_beta,{}", cell(r.eval.posterior_mean_beta))?;
        writeln!(w, "{prefix},leakage,posterior_mean_gamma,{}", cell(r.eval.posterior_mean_gamma))?;
    }
    w.flush()?;
    Ok(())
}
