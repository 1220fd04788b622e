//! Gauss–Legendre rules and the half-normal expectation rule built on them.

use std::f64::consts::PI;

use crate::math::normal_pdf;

/// Nodes and weights of an `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Computes the rule by Newton iteration on the Legendre polynomial `P_n`,
    /// starting from the Tricomi approximation of each root.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
                    let (_, d) = legendre_with_derivative(n, x);
                    dp = d;
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Integrates `f` over `[a, b]`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, a: f64, b: f64, f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let (p, pm1) = if n == 0 { (1.0, 0.0) } else { (p1, p0) };
    let d = n as f64 * (x * p - pm1) / (x * x - 1.0);
    (p, d)
}

/// Discrete approximation of a half-normal distribution with the given scale:
/// Gauss–Legendre nodes on `[0, span · scale]` weighted by the half-normal
/// density, renormalised to unit mass.
#[derive(Debug, Clone)]
pub struct HalfNormalRule {
    pub scale: f64,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl HalfNormalRule {
    pub const DEFAULT_NODES: usize = 64;
    pub const DEFAULT_SPAN: f64 = 6.0;

    pub fn new(scale: f64) -> Self {
        Self::with_nodes(scale, Self::DEFAULT_NODES, Self::DEFAULT_SPAN)
    }

    pub fn with_nodes(scale: f64, n: usize, span: f64) -> Self {
        assert!(scale > 0.0, "half-normal scale must be positive");
        let gl = GaussLegendre::new(n);
        let upper = span * scale;
        let half = 0.5 * upper;
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for (x, w) in gl.nodes.iter().zip(&gl.weights) {
            let e = half * (x + 1.0);
            nodes.push(e);
            weights.push(w * half * 2.0 * normal_pdf(e, 0.0, scale));
        }
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        Self {
            scale,
            nodes,
            weights,
        }
    }

    /// `E[f(e)]` for `e ~ half-normal(scale)`.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(e, w)| w * f(*e))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_rules_match_tabulated_values() {
        let r = GaussLegendre::new(3);
        let x = (3.0f64 / 5.0).sqrt();
        assert!((r.nodes[0] + x).abs() < 1e-14 && r.nodes[1].abs() < 1e-14);
        assert!((r.weights[0] - 5.0 / 9.0).abs() < 1e-14);
        assert!((r.weights[1] - 8.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn sixty_four_nodes_integrate_high_degree_polynomials_exactly() {
        let r = GaussLegendre::new(64);
        assert!((r.weights.iter().sum::<f64>() - 2.0).abs() < 1e-13);
        // degree 126 is within the 2n-1 exactness range
        let v = r.integrate(-1.0, 1.0, |x| x.powi(126));
        assert!((v - 2.0 / 127.0).abs() < 1e-13);
        let v = r.integrate(0.0, 2.0, |x| x.powi(5));
        assert!((v - 64.0 / 6.0).abs() < 1e-11);
    }

    #[test]
    fn half_normal_moments() {
        let s = 0.1;
        let rule = HalfNormalRule::new(s);
        let m1 = rule.expect(|e| e);
        let m2 = rule.expect(|e| e * e);
        // truncation at 6 scales shifts the first two moments by ~1e-8 and ~7e-8 relative
        assert!((m1 - s * (2.0 / PI).sqrt()).abs() < 5e-8 * s);
        assert!((m2 - s * s).abs() < 5e-7 * s * s);
        assert!(rule.nodes.iter().all(|&e| (0.0..=0.6).contains(&e)));
    }
}
