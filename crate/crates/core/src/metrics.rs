//! Prediction accuracy, disparity and scoring rules.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math::correlation;

/// Lower clip for probabilities inside the log score.
pub const PROB_CLIP: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no observations")]
    Empty,
    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),
}

fn check(a: usize, b: usize) -> Result<(), MetricsError> {
    if a != b {
        return Err(MetricsError::LengthMismatch(a, b));
    }
    if a == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

pub fn rmse(truth: &[f64], pred: &[f64]) -> Result<f64, MetricsError> {
    check(truth.len(), pred.len())?;
    let ss: f64 = truth.iter().zip(pred).map(|(t, p)| (t - p) * (t - p)).sum();
    Ok((ss / truth.len() as f64).sqrt())
}

/// Pearson correlation between the prediction error `truth − pred` and `x`.
pub fn error_covariate_correlation(
    truth: &[f64],
    pred: &[f64],
    x: &[f64],
) -> Result<f64, MetricsError> {
    check(truth.len(), pred.len())?;
    check(truth.len(), x.len())?;
    let err: Vec<f64> = truth.iter().zip(pred).map(|(t, p)| t - p).collect();
    let flat = |v: &[f64]| v.iter().all(|e| *e == v[0]);
    if flat(&err) {
        return Err(MetricsError::ZeroVariance("prediction error"));
    }
    if flat(x) {
        return Err(MetricsError::ZeroVariance("covariate"));
    }
    Ok(correlation(&err, x))
}

/// Probability assigned to the realised class.
fn realised(y: u8, q: f64) -> f64 {
    if y == 1 {
        q
    } else {
        1.0 - q
    }
}

/// Mean log probability of the realised class; larger is better.
pub fn log_score(y: &[u8], q: &[f64]) -> Result<f64, MetricsError> {
    check(y.len(), q.len())?;
    let s: f64 = y
        .iter()
        .zip(q)
        .map(|(&y, &q)| realised(y, q).clamp(PROB_CLIP, 1.0).ln())
        .sum();
    Ok(s / y.len() as f64)
}

/// Mean of `2 q(y) − Σ_j q(j)² − 1`; larger is better, 0 is perfect.
pub fn brier_score(y: &[u8], q: &[f64]) -> Result<f64, MetricsError> {
    check(y.len(), q.len())?;
    let s: f64 = y
        .iter()
        .zip(q)
        .map(|(&y, &q)| 2.0 * realised(y, q) - (q * q + (1.0 - q) * (1.0 - q)) - 1.0)
        .sum();
    Ok(s / y.len() as f64)
}

/// Mean squared difference between predicted probability and label.
pub fn mse(y: &[u8], q: &[f64]) -> Result<f64, MetricsError> {
    check(y.len(), q.len())?;
    let s: f64 = y.iter().zip(q).map(|(&y, &q)| (q - y as f64).powi(2)).sum();
    Ok(s / y.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub accuracy: f64,
    /// `None` when nothing is classified positive.
    pub ppv: Option<f64>,
    /// `None` when nothing is classified negative.
    pub npv: Option<f64>,
}

/// Classifies `q ≥ threshold` as positive.
pub fn confusion_metrics(y: &[u8], q: &[f64], threshold: f64) -> Result<Confusion, MetricsError> {
    check(y.len(), q.len())?;
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&y, &q) in y.iter().zip(q) {
        match (q >= threshold, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |a: usize, b: usize| (a + b > 0).then(|| a as f64 / (a + b) as f64);
    Ok(Confusion {
        accuracy: (tp + tn) as f64 / y.len() as f64,
        ppv: ratio(tp, fp),
        npv: ratio(tn, fn_),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub log_score: f64,
    pub brier_score: f64,
    pub mse: f64,
    pub accuracy: f64,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub decision_threshold: f64,
    pub n: usize,
}

impl MetricsReport {
    pub fn compute(y: &[u8], q: &[f64], threshold: f64) -> Result<Self, MetricsError> {
        let c = confusion_metrics(y, q, threshold)?;
        Ok(Self {
            log_score: log_score(y, q)?,
            brier_score: brier_score(y, q)?,
            mse: mse(y, q)?,
            accuracy: c.accuracy,
            ppv: c.ppv,
            npv: c.npv,
            decision_threshold: threshold,
            n: y.len(),
        })
    }

    /// `(metric name, value)` in table order; absent rates are `None`.
    pub fn rows(&self) -> Vec<(&'static str, Option<f64>)> {
        vec![
            ("log_score", Some(self.log_score)),
            ("brier_score", Some(self.brier_score)),
            ("mse_prob_vs_label", Some(self.mse)),
            ("accuracy", Some(self.accuracy)),
            ("ppv", self.ppv),
            ("npv", self.npv),
        ]
    }
}

/// Writes a table with one row per metric and one column per model. Absent
/// values are left empty.
pub fn write_metrics_table<W: Write>(
    models: &[(String, MetricsReport)],
    mut out: W,
) -> std::io::Result<()> {
    let header: Vec<&str> = models.iter().map(|(m, _)| m.as_str()).collect();
    writeln!(out, "metric,{}", header.join(","))?;
    let Some((_, first)) = models.first() else {
        return Ok(());
    };
    for (r, (name, _)) in first.rows().iter().enumerate() {
        let cells: Vec<String> = models
            .iter()
            .map(|(_, rep)| rep.rows()[r].1.map(|v| v.to_string()).unwrap_or_default())
            .collect();
        writeln!(out, "{name},{}", cells.join(","))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub mean_predicted: f64,
    pub observed_rate: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    /// Ordered by predicted risk.
    pub bins: Vec<CalibrationBin>,
    pub binning: String,
}

/// Equal-count bins over the sorted predictions. Tied predictions always share
/// a bin, so fewer than `n_bins` bins may be returned.
pub fn calibration_curve(
    y: &[u8],
    q: &[f64],
    n_bins: usize,
) -> Result<CalibrationCurve, MetricsError> {
    check(y.len(), q.len())?;
    assert!(n_bins >= 2, "need at least two bins");
    let mut order: Vec<usize> = (0..q.len()).collect();
    order.sort_by(|&a, &b| q[a].total_cmp(&q[b]));
    let n = q.len();
    let mut bins = Vec::with_capacity(n_bins);
    let mut start = 0;
    for b in 1..=n_bins {
        if start >= n {
            break;
        }
        let mut end = (b * n / n_bins).max(start + 1);
        while end < n && q[order[end]] == q[order[end - 1]] {
            end += 1;
        }
        if b == n_bins {
            end = n;
        }
        if end <= start {
            continue;
        }
        let idx = &order[start..end];
        let count = idx.len();
        bins.push(CalibrationBin {
            mean_predicted: idx.iter().map(|&i| q[i]).sum::<f64>() / count as f64,
            observed_rate: idx.iter().map(|&i| y[i] as f64).sum::<f64>() / count as f64,
            count,
        });
        start = end;
    }
    Ok(CalibrationCurve {
        bins,
        binning: format!("quantile, {n_bins} bins, ties kept together"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_binary(n: usize, seed: u64) -> (Vec<u8>, Vec<f64>) {
        let mut r = rng::stream(seed, 0);
        let q: Vec<f64> = (0..n).map(|_| r.random::<f64>()).collect();
        let y = q.iter().map(|&p| u8::from(r.random::<f64>() < p)).collect();
        (y, q)
    }

    #[test]
    fn rmse_examples() {
        let t = [1.0, 2.0, -3.0];
        assert_eq!(rmse(&t, &t).unwrap(), 0.0);
        let p: Vec<f64> = t.iter().map(|v| v + 1.0).collect();
        assert!((rmse(&t, &p).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(rmse(&t, &p[..2]), Err(MetricsError::LengthMismatch(3, 2)));
    }

    #[test]
    fn rmse_matches_naive_two_pass() {
        let mut r = rng::stream(1, 0);
        let a: Vec<f64> = (0..1000).map(|_| r.random::<f64>()).collect();
        let b: Vec<f64> = (0..1000).map(|_| r.random::<f64>()).collect();
        let mut diffs = Vec::new();
        for i in 0..a.len() {
            diffs.push(a[i] - b[i]);
        }
        let mut acc = 0.0;
        for d in &diffs {
            acc += d * d;
        }
        assert!((rmse(&a, &b).unwrap() - (acc / 1000.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn error_correlation_examples() {
        let t = [1.0, 2.0, 4.0, 3.0];
        assert_eq!(
            error_covariate_correlation(&t, &t, &[1.0, 2.0, 3.0, 4.0]),
            Err(MetricsError::ZeroVariance("prediction error"))
        );
        let x = [0.5, -1.0, 2.0, 0.0];
        let pred: Vec<f64> = t.iter().zip(&x).map(|(t, x)| t - x).collect();
        assert!((error_covariate_correlation(&t, &pred, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_score_examples() {
        let y = [1, 0, 1];
        assert!(log_score(&y, &[1.0, 0.0, 1.0]).unwrap().abs() < 1e-15);
        assert!((log_score(&y, &[0.5; 3]).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        assert!((log_score(&[1], &[0.0]).unwrap() - PROB_CLIP.ln()).abs() < 1e-9);
    }

    #[test]
    fn log_score_matches_naive_loop() {
        let (y, q) = random_binary(500, 2);
        let mut acc = 0.0;
        for i in 0..y.len() {
            acc += if y[i] == 1 { q[i].ln() } else { (1.0 - q[i]).ln() };
        }
        assert!((log_score(&y, &q).unwrap() - acc / 500.0).abs() < 1e-12);
    }

    #[test]
    fn brier_examples_and_identity() {
        assert_eq!(brier_score(&[1, 0], &[1.0, 0.0]).unwrap(), 0.0);
        assert!((brier_score(&[1, 0], &[0.5, 0.5]).unwrap() + 0.5).abs() < 1e-15);
        let (y, q) = random_binary(1000, 3);
        let sq: f64 = y.iter().zip(&q).map(|(&y, &q)| (q - y as f64).powi(2)).sum::<f64>() / 1000.0;
        assert!((brier_score(&y, &q).unwrap() + 2.0 * sq).abs() < 1e-12);
    }

    #[test]
    fn confusion_examples() {
        let c = confusion_metrics(&[1, 0, 1], &[0.9, 0.1, 0.7], 0.5).unwrap();
        assert_eq!(c, Confusion { accuracy: 1.0, ppv: Some(1.0), npv: Some(1.0) });
        let c = confusion_metrics(&[1, 0], &[0.1, 0.2], 0.5).unwrap();
        assert_eq!(c.ppv, None);
        assert_eq!(c.npv, Some(0.5));
    }

    #[test]
    fn confusion_matches_brute_force() {
        let (y, q) = random_binary(2000, 4);
        let c = confusion_metrics(&y, &q, 0.3).unwrap();
        let pos: Vec<usize> = (0..y.len()).filter(|&i| q[i] >= 0.3).collect();
        let neg: Vec<usize> = (0..y.len()).filter(|&i| q[i] < 0.3).collect();
        let tp = pos.iter().filter(|&&i| y[i] == 1).count();
        let tn = neg.iter().filter(|&&i| y[i] == 0).count();
        assert_eq!(c.accuracy, (tp + tn) as f64 / 2000.0);
        assert_eq!(c.ppv, Some(tp as f64 / pos.len() as f64));
        assert_eq!(c.npv, Some(tn as f64 / neg.len() as f64));
    }

    #[test]
    fn calibrated_predictions_give_flat_curve() {
        let (y, q) = random_binary(1_000_000, 5);
        let curve = calibration_curve(&y, &q, 10).unwrap();
        assert_eq!(curve.bins.iter().map(|b| b.count).sum::<usize>(), y.len());
        for w in curve.bins.windows(2) {
            assert!(w[0].mean_predicted <= w[1].mean_predicted);
        }
        for b in &curve.bins {
            assert!((b.observed_rate - b.mean_predicted).abs() < 0.01);
        }
    }

    #[test]
    fn constant_prediction_is_one_bin() {
        let curve = calibration_curve(&[1, 0, 0, 1, 0], &[0.3; 5], 4).unwrap();
        assert_eq!(curve.bins.len(), 1);
        assert_eq!(curve.bins[0].count, 5);
        assert!((curve.bins[0].observed_rate - 0.4).abs() < 1e-15);
    }

    #[test]
    fn scores_are_proper() {
        let n = 1_000_000;
        let mut r = rng::stream(6, 0);
        for p in [0.2, 0.5, 0.7] {
            let y: Vec<u8> = (0..n).map(|_| u8::from(r.random::<f64>() < p)).collect();
            let grid: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
            let best = |score: &dyn Fn(&[u8], &[f64]) -> f64| {
                let vals: Vec<f64> = grid.iter().map(|&q| score(&y, &vec![q; n])).collect();
                grid[vals
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .unwrap()
                    .0]
            };
            assert!((best(&|y, q| log_score(y, q).unwrap()) - p).abs() < 1e-9);
            assert!((best(&|y, q| brier_score(y, q).unwrap()) - p).abs() < 1e-9);
        }
    }

    #[test]
    fn table_has_metric_rows_and_model_columns() {
        let (y, q) = random_binary(100, 7);
        let rep = MetricsReport::compute(&y, &q, 0.5).unwrap();
        let mut buf = Vec::new();
        write_metrics_table(&[("a".into(), rep.clone()), ("b".into(), rep)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("metric,a,b\n"));
        assert_eq!(text.lines().count(), 7);
    }

    proptest! {
        #[test]
        fn metrics_are_permutation_invariant(seed in 0u64..1000, shift in 1usize..50) {
            let (y, q) = random_binary(60, seed);
            let mut y2 = y.clone();
            let mut q2 = q.clone();
            y2.rotate_left(shift);
            q2.rotate_left(shift);
            let a = MetricsReport::compute(&y, &q, 0.5).unwrap();
            let b = MetricsReport::compute(&y2, &q2, 0.5).unwrap();
            prop_assert!((a.log_score - b.log_score).abs() < 1e-12);
            prop_assert!((a.brier_score - b.brier_score).abs() < 1e-12);
            prop_assert_eq!(a.accuracy, b.accuracy);
            prop_assert!(a.log_score <= 0.0);
        }
    }
}
