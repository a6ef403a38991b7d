//! Model comparison: WAIC, PSIS-LOO, residual-sum-of-squares shares and
//! effect-area shares.

mod criteria;
pub mod psis;
mod report;

use serde::{Deserialize, Serialize};

pub use criteria::{effect_area, effect_shares, fitted_rates, rss, rss_shares, area_share, RssShares};
pub use psis::PARETO_K_WARN;
pub use report::{ComparisonReport, EffectAreas, FittedModel, ModelCriteria};

use crate::data::ApcTable;
use crate::error::{ApcError, Result};
use crate::model::{ApcPosterior, ModelSpec};
use crate::sampler::PosteriorDraws;
use crate::stats::{self, log_sum_exp};

/// Per-draw, per-cell log-likelihoods, S × N row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseLogLik {
    n_draws: usize,
    n_cells: usize,
    values: Vec<f64>,
}

impl PointwiseLogLik {
    pub fn new(n_draws: usize, n_cells: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_draws * n_cells {
            return Err(ApcError::domain(format!(
                "{} values for {n_draws} draws x {n_cells} cells",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ApcError::domain(format!(
                "log-likelihood of draw {} cell {} is not finite",
                i / n_cells.max(1) + 1,
                i % n_cells.max(1) + 1
            )));
        }
        Ok(PointwiseLogLik {
            n_draws,
            n_cells,
            values,
        })
    }

    pub fn n_draws(&self) -> usize {
        self.n_draws
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, s: usize, n: usize) -> f64 {
        self.values[s * self.n_cells + n]
    }

    /// All draws for cell `n`.
    pub fn cell(&self, n: usize) -> Vec<f64> {
        (0..self.n_draws).map(|s| self.get(s, n)).collect()
    }
}

/// Evaluates every draw's per-cell Poisson log-likelihood.
pub fn pointwise_loglik(draws: &PosteriorDraws, table: &ApcTable, spec: &ModelSpec) -> Result<PointwiseLogLik> {
    let post = ApcPosterior::new(spec, table)?;
    check_draws(draws, &post)?;
    let n = post.n_cells();
    let mut values = vec![0.0; draws.n_draws() * n];
    for (row, out) in draws.rows().zip(values.chunks_mut(n)) {
        post.pointwise_into(row, out)?;
    }
    PointwiseLogLik::new(draws.n_draws(), n, values)
}

pub(crate) fn check_draws(draws: &PosteriorDraws, post: &ApcPosterior) -> Result<()> {
    let expected = post.layout().param_names();
    if draws.param_names() != expected.as_slice() {
        return Err(ApcError::domain(format!(
            "draws have {} parameters that do not match the {} model on this table ({} parameters)",
            draws.dim(),
            post.spec().family,
            expected.len()
        )));
    }
    if draws.n_draws() == 0 {
        return Err(ApcError::domain("no draws"));
    }
    Ok(())
}

/// log of the mean of exp(x); exact when all values are equal.
fn log_mean_exp(xs: &[f64]) -> f64 {
    if xs.iter().all(|x| *x == xs[0]) {
        return xs[0];
    }
    log_sum_exp(xs) - (xs.len() as f64).ln()
}

/// Standard error of an information criterion from its pointwise terms.
fn pointwise_se(terms: &[f64]) -> f64 {
    (terms.len() as f64 * stats::variance(terms)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waic {
    pub waic: f64,
    pub se: f64,
    pub p_waic: f64,
    pub elpd_waic: f64,
}

/// Widely applicable information criterion on the deviance scale.
pub fn waic(ll: &PointwiseLogLik) -> Result<Waic> {
    if ll.n_draws() < 2 {
        return Err(ApcError::domain(format!("WAIC needs at least 2 draws, got {}", ll.n_draws())));
    }
    let mut terms = Vec::with_capacity(ll.n_cells());
    let mut p_total = 0.0;
    let mut elpd = 0.0;
    for n in 0..ll.n_cells() {
        let col = ll.cell(n);
        let lppd = log_mean_exp(&col);
        let p = stats::variance(&col);
        p_total += p;
        elpd += lppd - p;
        terms.push(-2.0 * (lppd - p));
    }
    Ok(Waic {
        waic: -2.0 * elpd,
        se: pointwise_se(&terms),
        p_waic: p_total,
        elpd_waic: elpd,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Loo {
    pub looic: f64,
    pub se: f64,
    pub elpd_loo: f64,
    /// Effective number of parameters, lppd − elpd_loo.
    pub p_loo: f64,
    pub pareto_k: Vec<f64>,
}

impl Loo {
    /// Cells whose tail shape exceeds [`PARETO_K_WARN`].
    pub fn high_k_cells(&self) -> Vec<usize> {
        self.pareto_k
            .iter()
            .enumerate()
            .filter(|(_, k)| **k > PARETO_K_WARN)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Pareto-smoothed importance-sampling leave-one-out criterion.
pub fn psis_loo(ll: &PointwiseLogLik) -> Result<Loo> {
    if ll.n_draws() < psis::MIN_DRAWS {
        return Err(ApcError::domain(format!(
            "PSIS-LOO needs at least {} draws, got {}",
            psis::MIN_DRAWS,
            ll.n_draws()
        )));
    }
    let mut terms = Vec::with_capacity(ll.n_cells());
    let mut pareto_k = Vec::with_capacity(ll.n_cells());
    let mut elpd = 0.0;
    let mut lppd = 0.0;
    for n in 0..ll.n_cells() {
        let col = ll.cell(n);
        let ratios: Vec<f64> = col.iter().map(|v| -v).collect();
        let (lw, k) = psis::psis_log_weights(&ratios);
        let elpd_n = if k == f64::NEG_INFINITY {
            col[0]
        } else {
            let terms: Vec<f64> = lw.iter().zip(&col).map(|(w, l)| w + l).collect();
            log_sum_exp(&terms)
        };
        elpd += elpd_n;
        lppd += log_mean_exp(&col);
        terms.push(-2.0 * elpd_n);
        pareto_k.push(k);
    }
    Ok(Loo {
        looic: -2.0 * elpd,
        se: pointwise_se(&terms),
        elpd_loo: elpd,
        p_loo: lppd - elpd,
        pareto_k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::band_labels;
    use crate::model::{log_likelihood, Family, ParamLayout, ParamVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use statrs::function::gamma::ln_gamma;

    fn ll(s: usize, n: usize, v: Vec<f64>) -> PointwiseLogLik {
        PointwiseLogLik::new(s, n, v).unwrap()
    }

    #[test]
    fn waic_degenerate_variance() {
        let w = waic(&ll(2, 1, vec![-1.0, -1.0])).unwrap();
        assert_eq!(w.p_waic, 0.0);
        assert_eq!(w.waic, 2.0);
        assert_eq!(w.se, 0.0);
    }

    #[test]
    fn waic_two_draws_by_hand() {
        let w = waic(&ll(2, 1, vec![-1.0, -3.0])).unwrap();
        let lppd = ((-1f64).exp() / 2.0 + (-3f64).exp() / 2.0).ln();
        assert!((w.p_waic - 2.0).abs() < 1e-12);
        assert!((w.waic - (-2.0 * (lppd - 2.0))).abs() < 1e-10);
    }

    #[test]
    fn waic_needs_two_draws() {
        assert!(waic(&ll(1, 2, vec![-1.0, -2.0])).is_err());
    }

    #[test]
    fn loo_needs_enough_draws() {
        assert!(psis_loo(&ll(50, 1, vec![-1.0; 50])).is_err());
    }

    #[test]
    fn identical_draws_give_equal_criteria() {
        let row = [-1.3, -0.2, -7.5, -2.25];
        let values: Vec<f64> = (0..200).flat_map(|_| row).collect();
        let p = ll(200, 4, values);
        let w = waic(&p).unwrap();
        let l = psis_loo(&p).unwrap();
        let expected = -2.0 * row.iter().sum::<f64>();
        assert_eq!(w.waic, expected);
        assert_eq!(l.looic, expected);
        assert!(l.pareto_k.iter().all(|k| *k == f64::NEG_INFINITY));
    }

    #[test]
    fn rejects_non_finite() {
        assert!(PointwiseLogLik::new(2, 1, vec![0.0, f64::NAN]).is_err());
        assert!(PointwiseLogLik::new(2, 2, vec![0.0; 3]).is_err());
    }

    /// y_i ~ Poisson(λ e_i), λ ~ Gamma(a, b): the leave-one-out predictive
    /// is negative binomial, so elpd_loo is known exactly.
    #[test]
    fn conjugate_poisson_gamma_loo() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (a0, b0) = (2.0, 1.0);
        let e: Vec<f64> = (0..30).map(|_| rng.random_range(0.5..2.0)).collect();
        let y: Vec<f64> = e.iter().map(|ei| {
            let lam: f64 = 3.0 * ei;
            rand_distr::Poisson::new(lam).unwrap().sample(&mut rng)
        }).collect();
        let (sy, se): (f64, f64) = (y.iter().sum(), e.iter().sum());
        let (a, b) = (a0 + sy, b0 + se);
        let gamma = rand_distr::Gamma::new(a, 1.0 / b).unwrap();
        let s = 4000;
        let lambdas: Vec<f64> = (0..s).map(|_| gamma.sample(&mut rng)).collect();
        let lpmf = |yi: f64, mu: f64| yi * mu.ln() - mu - ln_gamma(yi + 1.0);
        let values: Vec<f64> = lambdas
            .iter()
            .flat_map(|l| y.iter().zip(&e).map(move |(yi, ei)| lpmf(*yi, l * ei)))
            .collect();
        let loo = psis_loo(&ll(s, y.len(), values)).unwrap();
        let exact: f64 = y
            .iter()
            .zip(&e)
            .map(|(yi, ei)| {
                let (ai, bi) = (a - yi, b - ei);
                ln_gamma(ai + yi) - ln_gamma(ai) - ln_gamma(yi + 1.0) + ai * (bi / (bi + ei)).ln()
                    + yi * (ei / (bi + ei)).ln()
            })
            .sum();
        assert!(((loo.elpd_loo - exact) / exact).abs() < 0.02, "{} vs {exact}", loo.elpd_loo);
        assert!(loo.pareto_k.iter().all(|k| *k < 0.5));
    }

    use rand_distr::Distribution;

    #[test]
    fn pointwise_rows_sum_to_likelihood() {
        let ages = band_labels(15, 5, 3);
        let periods = band_labels(1950, 5, 4);
        let births: Vec<u64> = (0..12).map(|i| 10 + 3 * i).collect();
        let exposures: Vec<f64> = (0..12).map(|i| 500.0 + 40.0 * i as f64).collect();
        let table = ApcTable::new(ages, periods, births, exposures, 5).unwrap();
        let spec = ModelSpec::new(Family::Apc);
        let layout = ParamLayout::for_table(&spec, &table);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..layout.dim).map(|_| rng.random_range(-0.5..0.5)).collect();
        let zero = vec![0.0; layout.dim];
        let values: Vec<f64> = zero.iter().chain(&x).copied().collect();
        let draws = PosteriorDraws::new(layout.param_names(), 1, 2, values, vec![], vec![]).unwrap();
        let p = pointwise_loglik(&draws, &table, &spec).unwrap();
        for (s, point) in [zero, x].iter().enumerate() {
            let params = ParamVector::from_unconstrained(&layout, point).unwrap();
            let total = log_likelihood(&params, &table, &spec).unwrap();
            let row: f64 = (0..p.n_cells()).map(|n| p.get(s, n)).sum();
            assert!((row - total).abs() < 1e-10);
            // independent per-cell loop
            for a in 1..=3 {
                for t in 1..=4 {
                    let mut eta = params.lambda0 + params.theta[a - 1];
                    eta += params.phi.as_ref().unwrap()[t - 1];
                    eta += params.alpha.as_ref().unwrap()[table.cohort_of(a, t) - 1];
                    let mu = (eta + table.exposure(a, t).ln()).exp();
                    let y = table.births(a, t) as f64;
                    let oracle = y * mu.ln() - mu - ln_gamma(y + 1.0);
                    let got = p.get(s, (a - 1) * 4 + (t - 1));
                    assert!((got - oracle).abs() < 1e-9 * oracle.abs().max(1.0));
                }
            }
        }
        let wrong = ModelSpec::new(Family::Ap);
        assert!(pointwise_loglik(&draws, &table, &wrong).is_err());
    }

    fn permuted(p: &PointwiseLogLik, draw_order: &[usize], cell_order: &[usize]) -> PointwiseLogLik {
        let values = draw_order
            .iter()
            .flat_map(|&s| cell_order.iter().map(move |&n| p.get(s, n)))
            .collect();
        ll(p.n_draws(), p.n_cells(), values)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn criteria_invariant_to_permutation(seed in 0u64..1000, n in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = 120;
            let values: Vec<f64> = (0..s * n).map(|_| -rng.random_range(0.0..4.0f64)).collect();
            let p = ll(s, n, values);
            let mut draw_order: Vec<usize> = (0..s).collect();
            let mut cell_order: Vec<usize> = (0..n).collect();
            use rand::seq::SliceRandom;
            draw_order.shuffle(&mut rng);
            cell_order.shuffle(&mut rng);
            let q = permuted(&p, &draw_order, &cell_order);
            let (w1, w2) = (waic(&p).unwrap(), waic(&q).unwrap());
            let (l1, l2) = (psis_loo(&p).unwrap(), psis_loo(&q).unwrap());
            prop_assert!((w1.waic - w2.waic).abs() <= 1e-9 * w1.waic.abs().max(1.0));
            prop_assert!((w1.se - w2.se).abs() <= 1e-9 * w1.se.max(1.0));
            prop_assert!((l1.looic - l2.looic).abs() <= 1e-9 * l1.looic.abs().max(1.0));
            prop_assert!((l1.se - l2.se).abs() <= 1e-9 * l1.se.max(1.0));
        }
    }
}
