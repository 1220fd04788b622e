//! Label bias in proxy-outcome regression and two Bayesian measurement models
//! that correct for it.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod leakage;
pub mod math;
pub mod metrics;
pub mod quadrature;
pub mod regress;
pub mod rng;
pub mod sampler;
pub mod simdata;
pub mod threshold;

pub use leakage::{LeakageParams, LeakagePriors, PredictionMode, Prior};
pub use metrics::{CalibrationCurve, MetricsReport};
pub use sampler::{Chains, PosteriorSamples, SamplerConfig, Support};
pub use simdata::{BinaryProxyData, Dataset, Schema, SemDataset, SemParams, ThresholdDataset};
pub use threshold::{RiskPrediction, ThresholdSpec};
