//! `g(s) = E_e[σ(s − e)]` for half-normal slack `e`, the diagnosis
//! probability given latent location `s = xβ − τ`.
//!
//! The reference path evaluates the 64-node quadrature directly in log space.
//! Likelihood evaluation inside MCMC uses a cubic Hermite table of `log g` and
//! `log(1 − g)` built from that same quadrature, with exact derivatives at the
//! knots; outside the table range it falls back to direct evaluation.

use crate::math::{log_sigmoid, logsumexp};
use crate::quadrature::HalfNormalRule;

const TABLE_MIN: f64 = -40.0;
const TABLE_MAX: f64 = 40.0;
const TABLE_STEP: f64 = 1.0 / 32.0;

#[derive(Debug, Clone)]
pub struct SlackIntegral {
    rule: HalfNormalRule,
    log_weights: Vec<f64>,
    /// Per knot: log g, d log g / ds, log(1 − g), d log(1 − g) / ds.
    table: Vec<[f64; 4]>,
}

impl SlackIntegral {
    pub fn new(e_scale: f64) -> Self {
        let rule = HalfNormalRule::new(e_scale);
        let log_weights = rule.weights.iter().map(|w| w.ln()).collect();
        let mut me = Self {
            rule,
            log_weights,
            table: Vec::new(),
        };
        let knots = ((TABLE_MAX - TABLE_MIN) / TABLE_STEP).round() as usize + 1;
        me.table = (0..knots)
            .map(|k| me.exact_with_derivatives(TABLE_MIN + k as f64 * TABLE_STEP))
            .collect();
        me
    }

    pub fn rule(&self) -> &HalfNormalRule {
        &self.rule
    }

    /// `g(s)` by direct quadrature.
    pub fn prob(&self, s: f64) -> f64 {
        self.rule.expect(|e| crate::math::sigmoid(s - e))
    }

    /// `(log g(s), log(1 − g(s)))` by direct quadrature.
    pub fn log_probs_exact(&self, s: f64) -> (f64, f64) {
        let v = self.exact_with_derivatives(s);
        (v[0], v[2])
    }

    fn exact_with_derivatives(&self, s: f64) -> [f64; 4] {
        let n = self.rule.nodes.len();
        let mut lp = Vec::with_capacity(n);
        let mut lq = Vec::with_capacity(n);
        let mut lpq = Vec::with_capacity(n);
        for (e, lw) in self.rule.nodes.iter().zip(&self.log_weights) {
            let a = log_sigmoid(s - e);
            let b = log_sigmoid(e - s);
            lp.push(lw + a);
            lq.push(lw + b);
            lpq.push(lw + a + b);
        }
        let log_g = logsumexp(&lp);
        let log_1m = logsumexp(&lq);
        let log_dg = logsumexp(&lpq);
        [log_g, (log_dg - log_g).exp(), log_1m, -(log_dg - log_1m).exp()]
    }

    /// `(log g(s), log(1 − g(s)))`, interpolated inside the table range.
    #[inline]
    pub fn log_probs(&self, s: f64) -> (f64, f64) {
        let v = self.interpolate(s);
        (v[0], v[2])
    }

    /// `(log g, d log g/ds, log(1 − g), d log(1 − g)/ds)`.
    #[inline]
    pub fn interpolate(&self, s: f64) -> [f64; 4] {
        if !(TABLE_MIN..TABLE_MAX).contains(&s) {
            return self.exact_with_derivatives(s);
        }
        let pos = (s - TABLE_MIN) / TABLE_STEP;
        let k = (pos as usize).min(self.table.len() - 2);
        let t = pos - k as f64;
        let (a, b) = (&self.table[k], &self.table[k + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        // derivative basis, per unit t
        let d00 = 6.0 * t2 - 6.0 * t;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = -d00;
        let d11 = 3.0 * t2 - 2.0 * t;
        let h = TABLE_STEP;
        let f = |i: usize| h00 * a[i] + h10 * h * a[i + 1] + h01 * b[i] + h11 * h * b[i + 1];
        let df = |i: usize| (d00 * a[i] + d01 * b[i]) / h + d10 * a[i + 1] + d11 * b[i + 1];
        [f(0), df(0), f(2), df(2)]
    }
}
