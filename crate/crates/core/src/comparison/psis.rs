//! Pareto-smoothed importance sampling.

use crate::stats::log_sum_exp;

/// Tail-shape estimates above this flag unreliable importance weights.
pub const PARETO_K_WARN: f64 = 0.7;

/// Minimum draws for PSIS to be attempted.
pub const MIN_DRAWS: usize = 100;

/// Number of largest ratios replaced by Pareto order statistics.
pub fn tail_length(n_draws: usize) -> usize {
    let s = n_draws as f64;
    (0.2 * s).min(3.0 * s.sqrt()).ceil() as usize
}

/// Generalized Pareto fit to positive exceedances `x` (sorted ascending).
///
/// Profile-likelihood averaging over a grid of θ = −k/σ values, followed by
/// shrinkage of k toward 0.5 with weight 10 draws. Returns (k, σ).
pub fn gpd_fit(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    let nf = n as f64;
    let prior = 3.0;
    let m = 30 + (nf.sqrt()) as usize;
    let q1_index = ((nf / 4.0 + 0.5).floor() as usize).max(1) - 1;
    let x_star = x[q1_index];
    let x_max = x[n - 1];

    let profile = |theta: f64| -> f64 {
        let k = x.iter().map(|v| (-theta * v).ln_1p()).sum::<f64>() / nf;
        let l = nf * ((-theta / k).ln() - k - 1.0);
        if l.is_finite() {
            l
        } else {
            f64::NEG_INFINITY
        }
    };
    let thetas: Vec<f64> = (1..=m)
        .map(|j| 1.0 / x_max + (1.0 - (m as f64 / (j as f64 - 0.5)).sqrt()) / prior / x_star)
        .collect();
    let log_lik: Vec<f64> = thetas.iter().map(|t| profile(*t)).collect();
    let norm = log_sum_exp(&log_lik);
    let theta_hat: f64 = thetas
        .iter()
        .zip(&log_lik)
        .map(|(t, l)| t * (l - norm).exp())
        .sum();
    let k = x.iter().map(|v| (-theta_hat * v).ln_1p()).sum::<f64>() / nf;
    let sigma = -k / theta_hat;
    let k = (k * nf + 10.0 * 0.5) / (nf + 10.0);
    (k, sigma)
}

/// Quantile function of the generalized Pareto distribution at location 0.
pub fn gpd_quantile(p: f64, k: f64, sigma: f64) -> f64 {
    if k.abs() < 1e-15 {
        -sigma * (-p).ln_1p()
    } else {
        sigma * (-k * (-p).ln_1p()).exp_m1() / k
    }
}

/// Smoothed, normalized log-weights and the Pareto k diagnostic.
///
/// The largest [`tail_length`] ratios are replaced by expected order
/// statistics of a generalized Pareto fit; all weights are then truncated at
/// the largest raw ratio. When every ratio is equal the weights are exactly
/// uniform and k is `-inf`.
pub fn psis_log_weights(log_ratios: &[f64]) -> (Vec<f64>, f64) {
    let s = log_ratios.len();
    let max = log_ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = log_ratios.iter().copied().fold(f64::INFINITY, f64::min);
    if max == min {
        return (vec![-(s as f64).ln(); s], f64::NEG_INFINITY);
    }
    let mut lw: Vec<f64> = log_ratios.iter().map(|r| r - max).collect();
    let tail = tail_length(s).min(s - 1);
    let mut k = f64::INFINITY;
    if tail >= 5 {
        let mut order: Vec<usize> = (0..s).collect();
        order.sort_by(|&a, &b| lw[a].total_cmp(&lw[b]));
        let tail_ids = &order[s - tail..];
        let lw_tail: Vec<f64> = tail_ids.iter().map(|&i| lw[i]).collect();
        if lw_tail[tail - 1] - lw_tail[0] > f64::EPSILON / 100.0 {
            let cutoff = lw[order[s - tail - 1]];
            let exp_cutoff = cutoff.exp();
            let exceed: Vec<f64> = lw_tail.iter().map(|v| v.exp() - exp_cutoff).collect();
            let (k_hat, sigma) = gpd_fit(&exceed);
            if k_hat.is_finite() && sigma.is_finite() && sigma > 0.0 {
                for (j, &i) in tail_ids.iter().enumerate() {
                    let p = (j as f64 + 0.5) / tail as f64;
                    lw[i] = (gpd_quantile(p, k_hat, sigma) + exp_cutoff).ln();
                }
            }
            k = k_hat;
        }
    }
    for v in &mut lw {
        if *v > 0.0 {
            *v = 0.0;
        }
    }
    let norm = log_sum_exp(&lw);
    for v in &mut lw {
        *v -= norm;
    }
    (lw, k)
}
