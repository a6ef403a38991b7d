//! Split-R̂ and rank-normalized bulk effective sample size.

use statrs::distribution::{ContinuousCDF, Normal};

use super::draws::PosteriorDraws;
use crate::error::{ApcError, Result};
use crate::stats;

/// Superefficient ESS estimates are capped at this multiple of the draw count.
pub const ESS_CAP_FACTOR: f64 = 10.0;

/// Split-R̂ of one parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rhat {
    pub value: f64,
    /// Set when every half-chain is constant; `value` is then reported as 1.
    pub zero_variance: bool,
}

fn check_shape(chains: &[Vec<f64>]) -> Result<usize> {
    if chains.len() < 2 {
        return Err(ApcError::domain(format!(
            "split diagnostics need at least 2 chains, got {}",
            chains.len()
        )));
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(ApcError::domain("chains have different lengths"));
    }
    if n < 4 {
        return Err(ApcError::domain(format!(
            "split diagnostics need at least 4 draws per chain, got {n}"
        )));
    }
    Ok(n)
}

/// Halves each chain; the middle draw of an odd-length chain is dropped.
fn split(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    chains
        .iter()
        .flat_map(|c| {
            let half = c.len() / 2;
            [&c[..half], &c[c.len() - half..]]
        })
        .collect()
}

/// Split-R̂ for one parameter given its per-chain draws.
pub fn split_rhat_chains(chains: &[Vec<f64>]) -> Result<Rhat> {
    check_shape(chains)?;
    let halves = split(chains);
    let m = halves.len() as f64;
    let n = halves[0].len() as f64;
    let means: Vec<f64> = halves.iter().map(|h| stats::mean(h)).collect();
    let grand = stats::mean(&means);
    let between = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let within = halves.iter().map(|h| stats::variance(h)).sum::<f64>() / m;
    if within <= 0.0 || !within.is_finite() {
        return Ok(Rhat {
            value: 1.0,
            zero_variance: true,
        });
    }
    let var_plus = (n - 1.0) / n * within + between / n;
    Ok(Rhat {
        value: (var_plus / within).sqrt(),
        zero_variance: false,
    })
}

/// Split-R̂ for every parameter.
pub fn split_rhat(draws: &PosteriorDraws) -> Result<Vec<Rhat>> {
    (0..draws.dim())
        .map(|j| split_rhat_chains(&draws.chain_columns(j)))
        .collect()
}

/// Replaces pooled values by normal scores of their average ranks.
fn rank_normalize(halves: &[&[f64]]) -> Vec<Vec<f64>> {
    let pooled: Vec<f64> = halves.iter().flat_map(|h| h.iter().copied()).collect();
    let s = pooled.len();
    let mut order: Vec<usize> = (0..s).collect();
    order.sort_by(|&a, &b| pooled[a].total_cmp(&pooled[b]));
    let mut ranks = vec![0.0; s];
    let mut i = 0;
    while i < s {
        let mut j = i;
        while j + 1 < s && pooled[order[j + 1]] == pooled[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = avg;
        }
        i = j + 1;
    }
    let normal = Normal::standard();
    let scores: Vec<f64> = ranks
        .iter()
        .map(|r| normal.inverse_cdf((r - 0.375) / (s as f64 + 0.25)))
        .collect();
    let mut out = Vec::with_capacity(halves.len());
    let mut offset = 0;
    for h in halves {
        out.push(scores[offset..offset + h.len()].to_vec());
        offset += h.len();
    }
    out
}

/// Autocovariance at `lag` with divisor n.
fn autocov(x: &[f64], mean: f64, lag: usize) -> f64 {
    let n = x.len();
    (0..n - lag).map(|i| (x[i] - mean) * (x[i + lag] - mean)).sum::<f64>() / n as f64
}

/// Multi-chain ESS with Geyer's initial monotone sequence truncation.
fn ess_multichain(chains: &[Vec<f64>]) -> f64 {
    let m = chains.len();
    let n = chains[0].len();
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| stats::mean(c)).collect();
    let acov = |lag: usize| -> f64 {
        chains
            .iter()
            .zip(&means)
            .map(|(c, mu)| autocov(c, *mu, lag))
            .sum::<f64>()
            / m as f64
    };
    let acov0: Vec<f64> = chains.iter().zip(&means).map(|(c, mu)| autocov(c, *mu, 0)).collect();
    let mean_var = acov0.iter().map(|a| a * nf / (nf - 1.0)).sum::<f64>() / m as f64;
    let mut var_plus = mean_var * (nf - 1.0) / nf;
    if m > 1 {
        var_plus += stats::variance(&means);
    }
    let total = (m * n) as f64;
    if var_plus <= 0.0 || !var_plus.is_finite() {
        return total;
    }

    let rho = |lag: usize| 1.0 - (mean_var - acov(lag)) / var_plus;
    let mut rho_hat = vec![0.0; n + 1];
    rho_hat[0] = 1.0;
    let mut rho_even = 1.0;
    let mut rho_odd = rho(1);
    rho_hat[1] = rho_odd;
    let mut t = 1;
    while t + 5 < n && rho_even + rho_odd > 0.0 {
        rho_even = rho(t + 1);
        rho_odd = rho(t + 2);
        if rho_even + rho_odd >= 0.0 {
            rho_hat[t + 1] = rho_even;
            rho_hat[t + 2] = rho_odd;
        }
        t += 2;
    }
    let max_t = t;
    if rho_even > 0.0 {
        rho_hat[max_t + 1] = rho_even;
    }
    // enforce a monotone sequence of paired sums
    let mut t = 1;
    while t + 2 <= max_t {
        let prev = rho_hat[t - 1] + rho_hat[t];
        if rho_hat[t + 1] + rho_hat[t + 2] > prev {
            rho_hat[t + 1] = prev / 2.0;
            rho_hat[t + 2] = prev / 2.0;
        }
        t += 2;
    }
    let mut tau = -1.0 + 2.0 * rho_hat[..max_t].iter().sum::<f64>() + rho_hat[max_t + 1];
    tau = tau.max(1.0 / total.log10());
    (total / tau).min(ESS_CAP_FACTOR * total)
}

/// Bulk ESS of one parameter: split chains, rank-normalize, then the
/// multi-chain autocorrelation estimate.
pub fn ess_bulk_chains(chains: &[Vec<f64>]) -> Result<f64> {
    check_shape(chains)?;
    let halves = split(chains);
    let first = halves[0][0];
    if halves.iter().all(|h| h.iter().all(|v| *v == first)) {
        return Ok(halves.iter().map(|h| h.len()).sum::<usize>() as f64);
    }
    let z = rank_normalize(&halves);
    Ok(ess_multichain(&z))
}

pub fn ess_bulk(draws: &PosteriorDraws) -> Result<Vec<f64>> {
    (0..draws.dim())
        .map(|j| ess_bulk_chains(&draws.chain_columns(j)))
        .collect()
}
