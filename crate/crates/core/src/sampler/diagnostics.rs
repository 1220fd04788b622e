//! Split-R̂ and autocorrelation-based effective sample size.

use super::Chains;

/// Split-R̂ for one parameter. Each chain is cut in half and the halves are
/// treated as separate chains. Returns 1 when every draw is identical.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let mut halves: Vec<&[f64]> = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let mid = c.len() / 2;
        halves.push(&c[..mid]);
        halves.push(&c[c.len() - mid..]);
    }
    let (w, b_over_n, n) = between_within(&halves);
    if w <= 0.0 {
        return if b_over_n <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var_plus = (n - 1.0) / n * w + b_over_n;
    (var_plus / w).sqrt()
}

/// Returns (W, B/n, n) for equal-length chains.
fn between_within(chains: &[&[f64]]) -> (f64, f64, f64) {
    let m = chains.len() as f64;
    let n = chains[0].len() as f64;
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let grand = means.iter().sum::<f64>() / m;
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    let b_over_n = if m > 1.0 {
        means.iter().map(|mu| (mu - grand) * (mu - grand)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    (w, b_over_n, n)
}

/// Multi-chain effective sample size.
///
/// Autocorrelations are combined across chains through the marginal variance
/// estimate, summed in adjacent pairs (Geyer's initial positive sequence) up to
/// the first negative pair, and the result is capped at the total draw count.
pub fn effective_sample_size(chains: &[Vec<f64>]) -> f64 {
    let refs: Vec<&[f64]> = chains.iter().map(Vec::as_slice).collect();
    let m = refs.len();
    let n = refs[0].len();
    let total = (m * n) as f64;
    let (w, b_over_n, nf) = between_within(&refs);
    if w <= 0.0 {
        return 1.0;
    }
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    let means: Vec<f64> = refs.iter().map(|c| c.iter().sum::<f64>() / nf).collect();
    let rho = |lag: usize| -> f64 {
        let mean_acov = refs
            .iter()
            .zip(&means)
            .map(|(c, mu)| {
                (0..n - lag).map(|i| (c[i] - mu) * (c[i + lag] - mu)).sum::<f64>() / nf
            })
            .sum::<f64>()
            / m as f64;
        1.0 - (w - mean_acov) / var_plus
    };
    let mut pair_sum = 0.0;
    let mut k = 0;
    while 2 * k + 1 < n {
        let p = rho(2 * k) + rho(2 * k + 1);
        if p < 0.0 {
            break;
        }
        pair_sum += p;
        k += 1;
    }
    let tau = -1.0 + 2.0 * pair_sum;
    if tau <= 0.0 {
        return total;
    }
    (total / tau).min(total)
}

pub fn rhat(chains: &Chains) -> Vec<f64> {
    (0..chains.n_params())
        .map(|p| split_rhat(&chains.param(p)))
        .collect()
}

pub fn ess(chains: &Chains) -> Vec<f64> {
    (0..chains.n_params())
        .map(|p| effective_sample_size(&chains.param(p)))
        .collect()
}
