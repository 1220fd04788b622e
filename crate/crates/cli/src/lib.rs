//! Experiment driver: each subcommand resolves a JSON config, runs one
//! experiment and writes CSV and JSON artifacts to an output directory.

pub mod config;
pub mod diabetes;
pub mod output;
pub mod props;
pub mod sweeps;

use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use labelbias_core::PredictionMode;

use crate::output::OutputDir;

#[derive(Debug, Parser)]
#[command(name = "labelbias", version, about = "Label-bias experiments with proxy outcomes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON config; omitted fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Filtering,
    Smoothing,
}

impl From<ModeArg> for PredictionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Filtering => PredictionMode::Filtering,
            ModeArg::Smoothing => PredictionMode::Smoothing,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the proxy-regression propositions on simulated SEM data.
    VerifyProps {
        #[command(flatten)]
        common: Common,
    },
    /// Prediction accuracy and error-covariate correlation across β.
    BetaSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Leakage-model accuracy under misspecified strong priors.
    MisspecSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Logistic regressions versus the threshold model on diagnosis data.
    Diabetes {
        #[command(flatten)]
        common: Common,
        /// Decision threshold for accuracy, PPV and NPV.
        #[arg(long)]
        threshold: Option<f64>,
        /// Use simulated data even if the config names a data file.
        #[arg(long)]
        synthetic: bool,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Threshold spec JSON written by `calibrate`.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Solve group thresholds from prevalence and undiagnosed shares.
    Calibrate {
        #[command(flatten)]
        common: Common,
    },
}

fn out_dir(common: &Common, default: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| Path::new("out").join(default))
}

/// Runs one subcommand. Returns `false` when the experiment ran but its checks
/// failed.
pub fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::VerifyProps { common } => {
            let cfg: props::PropsConfig = config::load(common.config.as_deref(), common.seed)?;
            let out = OutputDir::create(&out_dir(&common, "verify-props"), &cfg, cfg.seed)?;
            let report = props::run(&cfg)?;
            props::write(&report, &out)?;
            for s in &report.skipped {
                println!("skipped point {} (beta={}, gamma={}): {}", s.point, s.beta, s.gamma, s.reason);
            }
            for c in report.failures() {
                println!(
                    "FAIL point {} prop {} {}: analytic {} empirical {} tolerance {}",
                    c.point, c.proposition, c.component, c.analytic, c.empirical, c.tolerance
                );
            }
            println!(
                "{} checks, {} failed, {} points skipped",
                report.checks.len(),
                report.failures().count(),
                report.skipped.len()
            );
            Ok(report.all_pass())
        }
        Command::BetaSweep { common, mode } => {
            let mut cfg: sweeps::BetaSweepConfig = config::load(common.config.as_deref(), common.seed)?;
            if let Some(m) = mode {
                cfg.mode = m.into();
            }
            let out = OutputDir::create(&out_dir(&common, "beta-sweep"), &cfg, cfg.seed)?;
            let rows = sweeps::run_beta_sweep(&cfg)?;
            sweeps::write_beta_sweep(&rows, &out)?;
            println!("{} sweep points written to {}", rows.len(), out.path("beta_sweep.csv").display());
            Ok(true)
        }
        Command::MisspecSweep { common, mode } => {
            let mut cfg: sweeps::MisspecConfig = config::load(common.config.as_deref(), common.seed)?;
            if let Some(m) = mode {
                cfg.mode = m.into();
            }
            let out = OutputDir::create(&out_dir(&common, "misspec-sweep"), &cfg, cfg.seed)?;
            let rows = sweeps::run_misspec_sweep(&cfg)?;
            sweeps::write_misspec_sweep(&rows, &out)?;
            println!("{} sweep points written to {}", rows.len(), out.path("misspec_sweep.csv").display());
            Ok(true)
        }
        Command::Diabetes {
            common,
            threshold,
            synthetic,
            data,
            schema,
            spec,
        } => {
            let mut cfg: diabetes::DiabetesConfig = config::load(common.config.as_deref(), common.seed)?;
            if let Some(t) = threshold {
                cfg.decision_threshold = t;
            }
            if data.is_some() {
                cfg.data = data;
            }
            if schema.is_some() {
                cfg.schema = schema;
            }
            if spec.is_some() {
                cfg.spec = spec;
            }
            if synthetic {
                cfg.data = None;
                cfg.schema = None;
            }
            let out = OutputDir::create(&out_dir(&common, "diabetes"), &cfg, cfg.seed)?;
            let result = diabetes::run_diabetes(&cfg)?;
            diabetes::write_diabetes(&result, &out)?;
            println!("metrics against {} labels, n = {}", result.labels, result.data.len());
            for (m, r) in &result.reports {
                println!(
                    "{m:>10}: log score {:.5}  brier {:.5}  accuracy {:.4}",
                    r.log_score, r.brier_score, r.accuracy
                );
            }
            Ok(true)
        }
        Command::Calibrate { common } => {
            let cfg: diabetes::CalibrateConfig = config::load(common.config.as_deref(), common.seed)?;
            let out = OutputDir::create(&out_dir(&common, "calibrate"), &cfg, cfg.seed)?;
            let report = diabetes::run_calibrate(&cfg)?;
            diabetes::write_calibrate(&report, &out)?;
            println!("base alpha {:.5}", report.base_alpha);
            for r in &report.rows {
                println!(
                    "{:>12}: share {:.3} -> tau {:.4} (share with slack {:.4})",
                    r.group, r.target_share, r.tau, r.share_with_slack
                );
            }
            for (g, plain, slack) in &report.simulated {
                println!("{g:>12}: simulated share {plain:.4}, with slack {slack:.4}");
            }
            println!("spec written to {}", out.path("spec.json").display());
            Ok(true)
        }
    }
}
