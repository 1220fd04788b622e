//! `calibrate` and `diabetes`: threshold calibration from prevalence targets,
//! and the comparison of logistic regressions with the threshold model.
//!
//! Thresholds are non-negative: diagnosis requires `u1 ≥ τ + e`, so a larger
//! `τ` means more undiagnosed cases.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, ensure, Context, Result};
use labelbias_core::metrics::{calibration_curve, write_metrics_table};
use labelbias_core::regress::logistic_fit;
use labelbias_core::rng::child_seed;
use labelbias_core::simdata::{load_csv, simulate_threshold_dgp, CovariateSpec};
use labelbias_core::threshold::{
    calibrate, fit_threshold, predict_risk_batch, solve_base_rate, write_risk_csv, CalibrationRow,
    ThresholdError, BETA_PRIOR_SD,
};
use labelbias_core::{
    BinaryProxyData, CalibrationCurve, MetricsReport, PosteriorSamples, RiskPrediction,
    SamplerConfig, Schema, ThresholdSpec,
};
use serde::{Deserialize, Serialize};

use crate::config::Seeded;
use crate::output::{cell, OutputDir};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrateConfig {
    pub seed: u64,
    pub total_rate: f64,
    /// Overrides the intercept solved from `total_rate`.
    pub base_alpha: Option<f64>,
    pub shares: BTreeMap<String, f64>,
    pub e_scale: f64,
    /// Rows for the simulated check of the shares; 0 skips it. Needs exactly
    /// two groups, the second drawn with probability `group_prob`.
    pub simulate_n: usize,
    pub group_prob: f64,
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            total_rate: 0.14,
            base_alpha: None,
            shares: BTreeMap::from([("insured".into(), 0.16), ("uninsured".into(), 0.29)]),
            e_scale: 0.1,
            simulate_n: 1_000_000,
            group_prob: 0.3,
        }
    }
}

impl Seeded for CalibrateConfig {
    fn seed_mut(&mut self) -> &mut u64 {
        &mut self.seed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub base_alpha: f64,
    pub spec: ThresholdSpec,
    pub rows: Vec<CalibrationRow>,
    /// Simulated undiagnosed share per group without and with slack.
    pub simulated: Vec<(String, f64, f64)>,
}

pub fn resolve_spec(config: &CalibrateConfig) -> Result<(ThresholdSpec, Vec<CalibrationRow>)> {
    ensure!(
        config.total_rate > 0.0 && config.total_rate < 1.0,
        "total_rate must lie in (0, 1), got {}",
        config.total_rate
    );
    ensure!(!config.shares.is_empty(), "no groups to calibrate");
    let alpha = config.base_alpha.unwrap_or_else(|| solve_base_rate(config.total_rate));
    let shares: Vec<(String, f64)> = config.shares.iter().map(|(g, s)| (g.clone(), *s)).collect();
    Ok(calibrate(alpha, &shares, config.e_scale)?)
}

pub fn run_calibrate(config: &CalibrateConfig) -> Result<CalibrationReport> {
    let (spec, rows) = resolve_spec(config)?;
    let mut simulated = Vec::new();
    if config.simulate_n > 0 {
        let names: Vec<String> = config.shares.keys().cloned().collect();
        ensure!(names.len() == 2, "the simulated check needs exactly two groups");
        let covariates = CovariateSpec {
            continuous: 0,
            group_prob: config.group_prob,
            group_names: [names[0].clone(), names[1].clone()],
            group_column: false,
        };
        let mut shares = [[0.0; 2]; 2];
        for (k, with_slack) in [false, true].into_iter().enumerate() {
            let data = simulate_threshold_dgp(
                &[spec.base_alpha],
                &spec,
                config.simulate_n,
                child_seed(config.seed, k as u64),
                &covariates,
                with_slack,
            )?;
            for (g, share) in shares.iter_mut().enumerate() {
                share[k] = data.undiagnosed_share(g);
            }
        }
        for (g, name) in names.into_iter().enumerate() {
            simulated.push((name, shares[g][0], shares[g][1]));
        }
    }
    Ok(CalibrationReport {
        base_alpha: spec.base_alpha,
        spec,
        rows,
        simulated,
    })
}

pub fn write_calibrate(report: &CalibrationReport, out: &OutputDir) -> Result<()> {
    out.json("spec.json", &report.spec)?;
    let mut w = out.csv("calibration.csv")?;
    writeln!(w, "group,metric,value")?;
    writeln!(w, "all,base_alpha,{}", report.base_alpha)?;
    for r in &report.rows {
        writeln!(w, "{},target_share,{}", r.group, r.target_share)?;
        writeln!(w, "{},tau,{}", r.group, r.tau)?;
        writeln!(w, "{},share_with_slack,{}", r.group, r.share_with_slack)?;
    }
    for (g, plain, slack) in &report.simulated {
        writeln!(w, "{g},simulated_share,{plain}")?;
        writeln!(w, "{g},simulated_share_with_slack,{slack}")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n: usize,
    /// One per design column: intercept, continuous covariates, group.
    pub coefficients: Vec<f64>,
    pub covariates: CovariateSpec,
    pub with_slack: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n: 100_000,
            coefficients: vec![-2.2, 0.8, 0.6, 0.0],
            covariates: CovariateSpec::default(),
            with_slack: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiabetesConfig {
    pub seed: u64,
    /// Real data: a CSV and its schema sidecar. Synthetic data is used when
    /// these are absent.
    pub data: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub synthetic: SyntheticConfig,
    /// A spec written by `calibrate`; otherwise calibrated from `calibration`.
    pub spec: Option<PathBuf>,
    pub calibration: CalibrateConfig,
    pub decision_threshold: f64,
    pub calibration_bins: usize,
    pub prior_sd: f64,
    pub sampler: SamplerConfig,
}

impl Default for DiabetesConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: None,
            schema: None,
            synthetic: SyntheticConfig::default(),
            spec: None,
            calibration: CalibrateConfig {
                simulate_n: 0,
                ..Default::default()
            },
            decision_threshold: 0.5,
            calibration_bins: 10,
            prior_sd: BETA_PRIOR_SD,
            sampler: SamplerConfig::default(),
        }
    }
}

impl Seeded for DiabetesConfig {
    fn seed_mut(&mut self) -> &mut u64 {
        &mut self.seed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupCurve {
    pub model: String,
    pub group: String,
    pub curve: CalibrationCurve,
}

pub struct DiabetesResult {
    pub spec: ThresholdSpec,
    pub data: BinaryProxyData,
    /// `"truth"` when the true label is known, else `"proxy"`.
    pub labels: &'static str,
    pub reports: Vec<(String, MetricsReport)>,
    pub curves: Vec<GroupCurve>,
    pub samples: PosteriorSamples,
    pub risk: Vec<RiskPrediction>,
}

impl DiabetesResult {
    pub fn report(&self, model: &str) -> Option<&MetricsReport> {
        self.reports.iter().find(|(m, _)| m == model).map(|(_, r)| r)
    }
}

pub fn load_spec(config: &DiabetesConfig) -> Result<ThresholdSpec> {
    match &config.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let spec: ThresholdSpec =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?;
            spec.validate()?;
            Ok(spec)
        }
        None => Ok(resolve_spec(&config.calibration)?.0),
    }
}

/// The data and the name of its group design column, if any.
pub fn load_data(config: &DiabetesConfig, spec: &ThresholdSpec) -> Result<(BinaryProxyData, Option<String>)> {
    match (&config.data, &config.schema) {
        (Some(data), Some(schema)) => {
            let schema = Schema::from_json_file(schema)?;
            let group_col = schema.group.as_ref().map(|_| schema.group_labels[1].clone());
            let data = load_csv(data, &schema)?.to_binary_proxy()?;
            Ok((data, group_col))
        }
        (Some(_), None) | (None, Some(_)) => bail!("real data needs both a data file and a schema"),
        (None, None) => {
            let s = &config.synthetic;
            let data = simulate_threshold_dgp(
                &s.coefficients,
                spec,
                s.n,
                config.seed,
                &s.covariates,
                s.with_slack,
            )?;
            let group_col = s.covariates.group_column.then(|| s.covariates.group_names[1].clone());
            Ok((data.observed(), group_col))
        }
    }
}

fn sample_threshold(data: &BinaryProxyData, spec: &ThresholdSpec, config: &DiabetesConfig) -> Result<PosteriorSamples> {
    let sampler = SamplerConfig {
        seed: child_seed(config.seed, 1),
        ..config.sampler.clone()
    };
    match fit_threshold(data, spec, config.prior_sd, &sampler) {
        Ok(s) => Ok(s),
        Err(ThresholdError::NotConverged { max_rhat, samples }) => {
            eprintln!("warning: threshold chains not converged (max R-hat {max_rhat:.3})");
            Ok(*samples)
        }
        Err(e) => Err(e.into()),
    }
}

pub fn run_diabetes(config: &DiabetesConfig) -> Result<DiabetesResult> {
    ensure!(
        config.decision_threshold > 0.0 && config.decision_threshold < 1.0,
        "decision threshold must lie in (0, 1)"
    );
    ensure!(config.calibration_bins >= 2, "need at least two calibration bins");
    let spec = load_spec(config)?;
    let (data, group_col) = load_data(config, &spec)?;
    for g in &data.group_names {
        spec.tau(g).with_context(|| format!("spec has no threshold for group {g:?}"))?;
    }

    let simple_data = match &group_col {
        Some(c) => data.without_column(c),
        None => data.clone(),
    };
    let simple = logistic_fit(&simple_data.x, &simple_data.y)?.predict_proba(&simple_data.x);
    let complex = logistic_fit(&data.x, &data.y)?.predict_proba(&data.x);
    let samples = sample_threshold(&data, &spec, config)?;
    let risk = predict_risk_batch(&samples, &data, &spec)?;
    let threshold: Vec<f64> = risk.iter().map(|r| r.p_marginal).collect();

    let mut models = vec![
        ("simple".to_string(), simple),
        ("complex".to_string(), complex),
        ("threshold".to_string(), threshold),
    ];
    let (labels, target) = match &data.truth {
        Some(t) => {
            models.push(("oracle".to_string(), logistic_fit(&data.x, t)?.predict_proba(&data.x)));
            ("truth", t.clone())
        }
        None => ("proxy", data.y.clone()),
    };

    let mut reports = Vec::new();
    let mut curves = Vec::new();
    for (name, q) in &models {
        reports.push((name.clone(), MetricsReport::compute(&target, q, config.decision_threshold)?));
        for (g, group) in data.group_names.iter().enumerate() {
            let idx: Vec<usize> = (0..data.len()).filter(|&i| data.group[i] == g).collect();
            if idx.len() < config.calibration_bins {
                continue;
            }
            let yg: Vec<u8> = idx.iter().map(|&i| target[i]).collect();
            let qg: Vec<f64> = idx.iter().map(|&i| q[i]).collect();
            curves.push(GroupCurve {
                model: name.clone(),
                group: group.clone(),
                curve: calibration_curve(&yg, &qg, config.calibration_bins)?,
            });
        }
    }
    Ok(DiabetesResult {
        spec,
        data,
        labels,
        reports,
        curves,
        samples,
        risk,
    })
}

#[derive(Serialize)]
struct Summary<'a> {
    labels: &'a str,
    n: usize,
    spec: &'a ThresholdSpec,
    models: BTreeMap<&'a str, &'a MetricsReport>,
    posterior_mean: BTreeMap<&'a str, f64>,
    max_rhat: f64,
}

pub fn write_diabetes(result: &DiabetesResult, out: &OutputDir) -> Result<()> {
    let mut w = out.csv("table.csv")?;
    write_metrics_table(&result.reports, &mut w)?;
    w.flush()?;

    let mut w = out.csv("calibration.csv")?;
    writeln!(w, "model,group,bin,mean_predicted,observed_rate,count")?;
    for gc in &result.curves {
        for (b, bin) in gc.curve.bins.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                gc.model,
                gc.group,
                b,
                cell(bin.mean_predicted),
                cell(bin.observed_rate),
                bin.count
            )?;
        }
    }
    w.flush()?;

    let mut w = out.csv("predictions.csv")?;
    write_risk_csv(&result.risk, &result.data, &mut w)?;
    w.flush()?;

    let mut w = out.csv("posterior.csv")?;
    result.samples.write_csv(&mut w)?;
    w.flush()?;

    out.json("spec.json", &result.spec)?;
    let names = &result.samples.chains.param_names;
    out.json(
        "summary.json",
        &Summary {
            labels: result.labels,
            n: result.data.len(),
            spec: &result.spec,
            models: result.reports.iter().map(|(m, r)| (m.as_str(), r)).collect(),
            posterior_mean: names
                .iter()
                .enumerate()
                .map(|(p, n)| (n.as_str(), result.samples.chains.mean(p)))
                .collect(),
            max_rhat: result.samples.max_rhat(),
        },
    )?;
    Ok(())
}
