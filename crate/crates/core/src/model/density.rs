//! Log-likelihood, log-prior and their analytic gradient.
//!
//! Summation order is fixed: cells row-major for the likelihood; for the
//! prior the intercept first, then age, period and cohort blocks, each as
//! RW(2) terms, anchors, diffuse leading levels, precision prior, Jacobian.
//! The log-posterior is always `log_likelihood + log_prior`.

use statrs::function::gamma::ln_gamma;

use super::layout::{Block, ParamLayout, ParamVector};
use super::{Family, ModelSpec, PrecisionPrior};
use crate::data::{ApcTable, Matrix, MIN_LEVELS};
use crate::error::{ApcError, Result};
use crate::sampler::LogDensity;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Normal log-density parameterised by variance.
pub fn normal_logpdf(x: f64, mean: f64, variance: f64) -> f64 {
    let z = x - mean;
    -0.5 * (LN_2PI + variance.ln()) - 0.5 * z * z / variance
}

/// Second-order random walk log-density of `x` given precision `tau`,
/// conditional on the first two levels.
pub fn rw2_logpdf(x: &[f64], tau: f64) -> Result<f64> {
    if x.len() < 3 {
        return Err(ApcError::domain(format!(
            "RW(2) needs at least 3 levels, got {}",
            x.len()
        )));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(ApcError::domain(format!("RW(2) precision must be positive, got {tau}")));
    }
    let variance = 1.0 / tau;
    Ok(x
        .windows(3)
        .map(|w| normal_logpdf(w[2], 2.0 * w[1] - w[0], variance))
        .sum())
}

/// Scaled Beta2 log-density of `tau` with shapes `p`, `q` and scale `b`.
pub fn sbeta2_logpdf(tau: f64, p: f64, q: f64, b: f64) -> Result<f64> {
    if [tau, p, q, b].iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(ApcError::domain(format!(
            "SBeta2 arguments must be positive: tau={tau}, p={p}, q={q}, b={b}"
        )));
    }
    let u = tau / b;
    Ok(ln_gamma(p + q) - ln_gamma(p) - ln_gamma(q) - b.ln() + (p - 1.0) * u.ln()
        - (p + q) * u.ln_1p())
}

/// Gamma log-density with shape and rate.
pub fn gamma_logpdf(tau: f64, shape: f64, rate: f64) -> Result<f64> {
    if [tau, shape, rate].iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(ApcError::domain(format!(
            "Gamma arguments must be positive: tau={tau}, shape={shape}, rate={rate}"
        )));
    }
    Ok(shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * tau.ln() - rate * tau)
}

/// Log-density of `log τ` under the precision prior (Jacobian included) and
/// its derivative with respect to `log τ`.
fn log_precision_term(prior: &PrecisionPrior, log_tau: f64) -> (f64, f64) {
    let tau = log_tau.exp();
    match *prior {
        PrecisionPrior::ScaledBeta2 { p, q, b } => {
            let u = tau / b;
            let lp = ln_gamma(p + q) - ln_gamma(p) - ln_gamma(q) - b.ln() + (p - 1.0) * (log_tau - b.ln())
                - (p + q) * u.ln_1p();
            let d = (p - 1.0) - (p + q) * u / (1.0 + u);
            (lp + log_tau, d + 1.0)
        }
        PrecisionPrior::Gamma { shape, rate } => {
            let lp = shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * log_tau - rate * tau;
            (lp + log_tau, shape - 1.0 - rate * tau + 1.0)
        }
    }
}

/// Role of a level in its block's prior.
#[derive(Clone, Copy, PartialEq)]
enum Pin {
    Free,
    Fixed,
    Anchor(f64),
}

/// Prior of one effect block; adds into `grad_levels` and returns
/// (log-density, ∂/∂ log τ).
fn block_prior(
    levels: &[f64],
    pins: &[(usize, Pin)],
    log_tau: f64,
    spec: &ModelSpec,
    mut grad_levels: Option<&mut [f64]>,
) -> (f64, f64) {
    let tau = log_tau.exp();
    let variance = 1.0 / tau;
    let n = levels.len();
    let mut lp = 0.0;
    let mut sum_sq = 0.0;
    for i in 2..n {
        let d = levels[i] - 2.0 * levels[i - 1] + levels[i - 2];
        lp += normal_logpdf(d, 0.0, variance);
        sum_sq += d * d;
        if let Some(g) = grad_levels.as_deref_mut() {
            g[i] -= tau * d;
            g[i - 1] += 2.0 * tau * d;
            g[i - 2] -= tau * d;
        }
    }
    let mut dlog_tau = 0.5 * (n - 2) as f64 - 0.5 * tau * sum_sq;

    let pin_of = |i: usize| {
        pins.iter()
            .find(|(j, _)| *j == i)
            .map(|(_, p)| *p)
            .unwrap_or(Pin::Free)
    };
    for &(i, pin) in pins {
        if let Pin::Anchor(sd) = pin {
            let var = sd * sd;
            lp += normal_logpdf(levels[i], 0.0, var);
            if let Some(g) = grad_levels.as_deref_mut() {
                g[i] -= levels[i] / var;
            }
        }
    }
    let diffuse_var = spec.constraints.diffuse_sd * spec.constraints.diffuse_sd;
    for i in 0..2 {
        if pin_of(i) == Pin::Free {
            lp += normal_logpdf(levels[i], 0.0, diffuse_var);
            if let Some(g) = grad_levels.as_deref_mut() {
                g[i] -= levels[i] / diffuse_var;
            }
        }
    }

    let (prior_lp, prior_d) = log_precision_term(&spec.precision_prior, log_tau);
    lp += prior_lp;
    dlog_tau += prior_d;
    (lp, dlog_tau)
}

fn block_pins(block: Block, layout: &ParamLayout, spec: &ModelSpec) -> Vec<(usize, Pin)> {
    let c = &spec.constraints;
    match block {
        Block::Age => vec![(0, Pin::Anchor(c.age_first_sd))],
        Block::Period => vec![(0, Pin::Fixed)],
        Block::Cohort => {
            let first = c.anchor_for(layout.n_cohort) - 1;
            vec![
                (first, Pin::Anchor(c.cohort_anchor_sd)),
                (first + 1, Pin::Anchor(c.cohort_anchor_sd)),
            ]
        }
    }
}

/// Log-prior at unconstrained `x`; adds its gradient into `grad` when given.
fn prior_at(
    x: &[f64],
    layout: &ParamLayout,
    spec: &ModelSpec,
    mut grad: Option<&mut [f64]>,
) -> Result<f64> {
    let intercept_var = spec.constraints.intercept_sd * spec.constraints.intercept_sd;
    let mut lp = normal_logpdf(x[0], 0.0, intercept_var);
    if let Some(g) = grad.as_deref_mut() {
        g[0] -= x[0] / intercept_var;
    }
    for block in layout.blocks() {
        let tau_idx = layout.log_tau_index(block).expect("active block");
        let log_tau = x[tau_idx];
        if !log_tau.is_finite() || !log_tau.exp().is_finite() || log_tau.exp() == 0.0 {
            return Err(ApcError::domain(format!(
                "{} precision out of range (log tau = {log_tau})",
                block.name()
            )));
        }
        let levels = layout.effect_levels(x, block).expect("active block");
        let pins = block_pins(block, layout, spec);
        let mut block_grad = grad.as_ref().map(|_| vec![0.0; levels.len()]);
        let (block_lp, dlog_tau) = block_prior(&levels, &pins, log_tau, spec, block_grad.as_deref_mut());
        lp += block_lp;
        if let (Some(g), Some(bg)) = (grad.as_deref_mut(), block_grad) {
            match block {
                Block::Age => add_into(&mut g[layout.theta..layout.theta + layout.n_age], &bg),
                Block::Period => {
                    let start = layout.phi.expect("period block");
                    add_into(&mut g[start..start + layout.n_period - 1], &bg[1..]);
                }
                Block::Cohort => {
                    let start = layout.alpha.expect("cohort block");
                    add_into(&mut g[start..start + layout.n_cohort], &bg);
                }
            }
            g[tau_idx] += dlog_tau;
        }
    }
    if lp.is_finite() {
        Ok(lp)
    } else {
        Err(ApcError::domain("log-prior is not finite"))
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[derive(Debug, Clone)]
struct CellTerm {
    age: usize,
    period: usize,
    cohort: usize,
    births: f64,
    log_offset: f64,
    log_factorial: f64,
}

/// Posterior of one model variant on one table, prepared for repeated
/// evaluation.
#[derive(Debug, Clone)]
pub struct ApcPosterior {
    spec: ModelSpec,
    layout: ParamLayout,
    cells: Vec<CellTerm>,
}

impl ApcPosterior {
    pub fn new(spec: &ModelSpec, table: &ApcTable) -> Result<Self> {
        spec.validate()?;
        let layout = ParamLayout::for_table(spec, table);
        let sign = spec.offset_mode.sign();
        let n_age = table.n_age();
        let mut cells = Vec::with_capacity(table.n_cells());
        for a in 1..=n_age {
            for t in 1..=table.n_period() {
                let y = table.births(a, t);
                cells.push(CellTerm {
                    age: a - 1,
                    period: t - 1,
                    cohort: table.cohort_of(a, t) - 1,
                    births: y as f64,
                    log_offset: sign * table.exposure(a, t).ln(),
                    log_factorial: ln_gamma(y as f64 + 1.0),
                });
            }
        }
        Ok(ApcPosterior {
            spec: spec.clone(),
            layout,
            cells,
        })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Linear predictor without offset for a cell.
    #[inline]
    fn eta(&self, x: &[f64], cell: &CellTerm) -> f64 {
        let l = &self.layout;
        let mut eta = x[0] + x[l.theta + cell.age];
        if let Some(phi) = l.phi {
            if cell.period > 0 {
                eta += x[phi + cell.period - 1];
            }
        }
        if let Some(alpha) = l.alpha {
            eta += x[alpha + cell.cohort];
        }
        eta
    }

    fn log_mean(&self, x: &[f64], cell: &CellTerm) -> Result<f64> {
        let log_mu = self.eta(x, cell) + cell.log_offset;
        if log_mu.is_finite() && log_mu < 700.0 {
            Ok(log_mu)
        } else {
            Err(ApcError::Evaluation {
                age: cell.age + 1,
                period: cell.period + 1,
                message: format!("log mean {log_mu} is out of range"),
            })
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.layout.dim {
            Ok(())
        } else {
            Err(ApcError::domain(format!(
                "parameter vector has {} entries, model expects {}",
                x.len(),
                self.layout.dim
            )))
        }
    }

    fn likelihood_at(&self, x: &[f64], mut grad: Option<&mut [f64]>) -> Result<f64> {
        let l = &self.layout;
        let mut ll = 0.0;
        for cell in &self.cells {
            let log_mu = self.log_mean(x, cell)?;
            let mu = log_mu.exp();
            ll += cell.births * log_mu - mu - cell.log_factorial;
            if let Some(g) = grad.as_deref_mut() {
                let r = cell.births - mu;
                g[0] += r;
                g[l.theta + cell.age] += r;
                if let Some(phi) = l.phi {
                    if cell.period > 0 {
                        g[phi + cell.period - 1] += r;
                    }
                }
                if let Some(alpha) = l.alpha {
                    g[alpha + cell.cohort] += r;
                }
            }
        }
        Ok(ll)
    }

    /// Poisson log-likelihood at unconstrained `x`.
    pub fn log_likelihood_at(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        self.likelihood_at(x, None)
    }

    pub fn log_prior_at(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        prior_at(x, &self.layout, &self.spec, None)
    }

    /// Log-posterior at `x`, overwriting `grad` with its gradient.
    pub fn log_posterior_grad_at(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.check_dim(x)?;
        if grad.len() != x.len() {
            return Err(ApcError::domain("gradient buffer has wrong length"));
        }
        grad.fill(0.0);
        let ll = self.likelihood_at(x, Some(grad))?;
        let lp = prior_at(x, &self.layout, &self.spec, Some(grad))?;
        let total = ll + lp;
        if !total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(ApcError::domain("log-posterior or gradient is not finite"));
        }
        Ok(total)
    }

    /// Per-cell log-likelihood (row-major) into `out`.
    pub fn pointwise_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_dim(x)?;
        for (cell, o) in self.cells.iter().zip(out.iter_mut()) {
            let log_mu = self.log_mean(x, cell)?;
            *o = cell.births * log_mu - log_mu.exp() - cell.log_factorial;
        }
        Ok(())
    }

    /// exp of the linear predictor without the offset, row-major. Under the
    /// standard offset this is the model's rate per person-year.
    pub fn rates_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.check_dim(x)?;
        for (cell, o) in self.cells.iter().zip(out.iter_mut()) {
            let log_mu = self.log_mean(x, cell)?;
            *o = (log_mu - cell.log_offset).exp();
        }
        Ok(())
    }
}

impl LogDensity for ApcPosterior {
    fn dim(&self) -> usize {
        self.layout.dim
    }

    fn logp_grad(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
        self.log_posterior_grad_at(x, grad)
    }
}

fn posterior_for(params: &ParamVector, table: &ApcTable, spec: &ModelSpec) -> Result<(ApcPosterior, Vec<f64>)> {
    let post = ApcPosterior::new(spec, table)?;
    let x = params.to_unconstrained(post.layout())?;
    Ok((post, x))
}

/// Poisson log-likelihood of the table under `params`.
pub fn log_likelihood(params: &ParamVector, table: &ApcTable, spec: &ModelSpec) -> Result<f64> {
    let (post, x) = posterior_for(params, table, spec)?;
    post.log_likelihood_at(&x)
}

/// Log-prior of `params`, including the log-precision Jacobian.
pub fn log_prior(params: &ParamVector, spec: &ModelSpec) -> Result<f64> {
    if params.family() != spec.family {
        return Err(ApcError::domain(format!(
            "parameters describe a {} model, spec is {}",
            params.family(),
            spec.family
        )));
    }
    spec.validate()?;
    let n_age = params.theta.len();
    let n_period = match (&params.phi, &params.alpha) {
        (Some(phi), _) => phi.len(),
        (None, Some(alpha)) => (alpha.len() + 1).checked_sub(n_age).unwrap_or(0),
        (None, None) => MIN_LEVELS,
    };
    if n_age < MIN_LEVELS || n_period < MIN_LEVELS {
        return Err(ApcError::domain("effect blocks need at least 3 levels"));
    }
    let layout = ParamLayout::new(spec.family, n_age, n_period);
    let x = params.to_unconstrained(&layout)?;
    prior_at(&x, &layout, spec, None)
}

/// `log_likelihood + log_prior`.
pub fn log_posterior(params: &ParamVector, table: &ApcTable, spec: &ModelSpec) -> Result<f64> {
    let (post, x) = posterior_for(params, table, spec)?;
    Ok(post.log_likelihood_at(&x)? + post.log_prior_at(&x)?)
}

/// Log-posterior and its gradient with respect to the unconstrained vector
/// `[λ0, θ, φ_2..φ_T, α, log τ]`.
pub fn log_posterior_grad(
    params: &ParamVector,
    table: &ApcTable,
    spec: &ModelSpec,
) -> Result<(f64, Vec<f64>)> {
    let (post, x) = posterior_for(params, table, spec)?;
    let mut grad = vec![0.0; x.len()];
    let lp = post.log_posterior_grad_at(&x, &mut grad)?;
    Ok((lp, grad))
}

/// Per-cell Poisson log-likelihoods (row-major) under `params`.
pub fn pointwise_log_likelihood(
    params: &ParamVector,
    table: &ApcTable,
    spec: &ModelSpec,
) -> Result<Vec<f64>> {
    let (post, x) = posterior_for(params, table, spec)?;
    let mut out = vec![0.0; post.n_cells()];
    post.pointwise_into(&x, &mut out)?;
    Ok(out)
}

/// Subtracts each row's mean from that row.
pub fn center_effects(effects: &Matrix) -> Matrix {
    let mut out = effects.clone();
    let cols = effects.cols();
    if cols == 0 {
        return out;
    }
    for r in 0..effects.rows() {
        let mean = (0..cols).map(|c| effects.get(r, c)).sum::<f64>() / cols as f64;
        for c in 0..cols {
            out.set(r, c, effects.get(r, c) - mean);
        }
    }
    out
}

impl Family {
    /// Blocks whose effects this family estimates.
    pub fn blocks(self) -> Vec<Block> {
        ParamLayout::new(self, MIN_LEVELS, MIN_LEVELS).blocks()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::band_labels;
    use crate::model::{Constraints, OffsetMode};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table(n_age: usize, n_period: usize, births: Vec<u64>, exposures: Vec<f64>) -> ApcTable {
        ApcTable::new(
            band_labels(15, 5, n_age),
            band_labels(1948, 5, n_period),
            births,
            exposures,
            5,
        )
        .unwrap()
    }

    fn random_table(rng: &mut ChaCha8Rng, n_age: usize, n_period: usize) -> ApcTable {
        let n = n_age * n_period;
        table(
            n_age,
            n_period,
            (0..n).map(|_| rng.random_range(0..200)).collect(),
            (0..n).map(|_| rng.random_range(100.0..2000.0)).collect(),
        )
    }

    fn random_point(rng: &mut ChaCha8Rng, layout: &ParamLayout) -> Vec<f64> {
        (0..layout.dim).map(|_| rng.random_range(-0.5..0.5)).collect()
    }

    // Independent Poisson log-pmf, per cell, straight from the definition.
    fn poisson_lpmf(y: u64, log_mu: f64) -> f64 {
        let log_fact: f64 = (1..=y).map(|k| (k as f64).ln()).sum();
        y as f64 * log_mu - log_mu.exp() - log_fact
    }

    #[test]
    fn zero_cell_with_unit_mean() {
        // The likelihood is per cell; a 3x3 table of y=0, p=1 gives 9 * (-1).
        let t = table(3, 3, vec![0; 9], vec![1.0; 9]);
        let spec = ModelSpec::new(Family::Apc);
        let layout = ParamLayout::for_table(&spec, &t);
        let ll = log_likelihood(&ParamVector::zeros(&layout), &t, &spec).unwrap();
        assert!((ll - (-9.0)).abs() < 1e-12);
    }

    #[test]
    fn two_births_at_rate_two() {
        let t = table(3, 3, vec![2; 9], vec![1.0; 9]);
        let spec = ModelSpec::new(Family::A);
        let layout = ParamLayout::for_table(&spec, &t);
        let mut p = ParamVector::zeros(&layout);
        p.lambda0 = 2f64.ln();
        let ll = log_likelihood(&p, &t, &spec).unwrap();
        let per_cell = 2.0 * 2f64.ln() - 2.0 - 2f64.ln();
        assert!((ll - 9.0 * per_cell).abs() < 1e-12);
    }

    #[test]
    fn likelihood_matches_cellwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for mode in [OffsetMode::Standard, OffsetMode::PaperLiteral] {
            for family in Family::ALL {
                let t = random_table(&mut rng, 3, 3);
                let spec = ModelSpec::new(family).with_offset_mode(mode);
                let layout = ParamLayout::for_table(&spec, &t);
                let x = random_point(&mut rng, &layout);
                let p = ParamVector::from_unconstrained(&layout, &x).unwrap();
                let mut expected = 0.0;
                for a in 1..=3 {
                    for tt in 1..=3 {
                        let c = 3 - a + tt;
                        let mut eta = p.lambda0 + p.theta[a - 1];
                        if let Some(phi) = &p.phi {
                            eta += phi[tt - 1];
                        }
                        if let Some(alpha) = &p.alpha {
                            eta += alpha[c - 1];
                        }
                        let lp = t.exposure(a, tt).ln();
                        let log_mu = match mode {
                            OffsetMode::Standard => eta + lp,
                            OffsetMode::PaperLiteral => eta - lp,
                        };
                        expected += poisson_lpmf(t.births(a, tt), log_mu);
                    }
                }
                let got = log_likelihood(&p, &t, &spec).unwrap();
                assert!((got - expected).abs() < 1e-12 * expected.abs().max(1.0), "{got} vs {expected}");
            }
        }
    }

    #[test]
    fn overflowing_predictor_names_cell() {
        let t = table(3, 3, vec![1; 9], vec![1.0; 9]);
        let spec = ModelSpec::new(Family::Apc);
        let layout = ParamLayout::for_table(&spec, &t);
        let mut p = ParamVector::zeros(&layout);
        p.theta[1] = 1e6;
        match log_likelihood(&p, &t, &spec) {
            Err(ApcError::Evaluation { age, period, .. }) => assert_eq!((age, period), (2, 1)),
            other => panic!("expected evaluation error, got {other:?}"),
        }
    }

    #[test]
    fn rw2_examples() {
        let tau: f64 = 3.7;
        let linear: Vec<f64> = (1..=6).map(|i| 0.4 - 1.3 * i as f64).collect();
        let expected = 4.0 * (0.5 * tau.ln() - 0.5 * LN_2PI);
        assert!((rw2_logpdf(&linear, tau).unwrap() - expected).abs() < 1e-12);

        let one = rw2_logpdf(&[0.0, 0.0, 1.0], 1.0).unwrap();
        assert!((one - (-0.5 - 0.5 * LN_2PI)).abs() < 1e-15);

        let x = [0.3, -1.2, 0.8, 2.5, -0.4, 1.1];
        let tau = 2.5_f64;
        let mut oracle = 0.0;
        for i in 2..x.len() {
            let resid = x[i] - (2.0 * x[i - 1] - x[i - 2]);
            oracle += 0.5 * (tau / (2.0 * std::f64::consts::PI)).ln() - 0.5 * tau * resid * resid;
        }
        assert!((rw2_logpdf(&x, tau).unwrap() - oracle).abs() < 1e-12);

        assert!(rw2_logpdf(&[1.0, 2.0], 1.0).is_err());
        assert!(rw2_logpdf(&[1.0, 2.0, 3.0], 0.0).is_err());
    }

    #[test]
    fn sbeta2_examples() {
        let v = sbeta2_logpdf(100.0, 0.5, 0.5, 100.0).unwrap();
        let density = 1.0 / (2.0 * std::f64::consts::PI * 100.0);
        assert!((v - density.ln()).abs() < 1e-12);
        assert!((v.exp() - 1.59155e-3).abs() < 1e-8);
        assert!((v - (-6.4430)).abs() < 1e-4);

        // p = q = 1 reduces to 1 / (b (1 + tau/b)^2)
        for tau in [1e-9, 0.3, 4.0, 50.0] {
            let b: f64 = 2.5;
            let closed = 1.0 / (b * (1.0 + tau / b).powi(2));
            assert!((sbeta2_logpdf(tau, 1.0, 1.0, b).unwrap().exp() - closed).abs() < 1e-12);
        }
        assert!((sbeta2_logpdf(1e-12, 1.0, 1.0, 2.0).unwrap().exp() - 0.5).abs() < 1e-9);

        assert!(sbeta2_logpdf(0.0, 0.5, 0.5, 1.0).is_err());
        assert!(sbeta2_logpdf(1.0, -0.5, 0.5, 1.0).is_err());
        assert!(sbeta2_logpdf(1.0, 0.5, 0.5, 0.0).is_err());
    }

    fn sum_of_components_at_zero(family: Family, n_age: usize, n_period: usize) -> f64 {
        // Assemble from the public component functions.
        let n_cohort = n_age - 1 + n_period;
        let c = Constraints::default();
        let jac = 0.0; // log tau = 0
        let sb = sbeta2_logpdf(1.0, 0.5, 0.5, 100.0).unwrap() + jac;
        let mut total = normal_logpdf(0.0, 0.0, 1.0);
        // age: rw2 + theta1 anchor + theta2 diffuse + precision prior
        total += rw2_logpdf(&vec![0.0; n_age], 1.0).unwrap()
            + normal_logpdf(0.0, 0.0, c.age_first_sd.powi(2))
            + normal_logpdf(0.0, 0.0, 100.0)
            + sb;
        if family.has_period() {
            total += rw2_logpdf(&vec![0.0; n_period], 1.0).unwrap() + normal_logpdf(0.0, 0.0, 100.0) + sb;
        }
        if family.has_cohort() {
            total += rw2_logpdf(&vec![0.0; n_cohort], 1.0).unwrap()
                + 2.0 * normal_logpdf(0.0, 0.0, 0.0025)
                + 2.0 * normal_logpdf(0.0, 0.0, 100.0)
                + sb;
        }
        total
    }

    #[test]
    fn prior_at_zero_matches_components() {
        for family in Family::ALL {
            let spec = ModelSpec::new(family);
            let layout = ParamLayout::new(family, 7, 15);
            let p = ParamVector::zeros(&layout);
            let got = log_prior(&p, &spec).unwrap();
            let want = sum_of_components_at_zero(family, 7, 15);
            assert!((got - want).abs() < 1e-12, "{family}: {got} vs {want}");
        }
    }

    #[test]
    fn ap_prior_has_no_cohort_terms() {
        let ap = log_prior(&ParamVector::zeros(&ParamLayout::new(Family::Ap, 7, 15)), &ModelSpec::new(Family::Ap)).unwrap();
        let a = log_prior(&ParamVector::zeros(&ParamLayout::new(Family::A, 7, 15)), &ModelSpec::new(Family::A)).unwrap();
        let period_only = rw2_logpdf(&[0.0; 15], 1.0).unwrap()
            + normal_logpdf(0.0, 0.0, 100.0)
            + sbeta2_logpdf(1.0, 0.5, 0.5, 100.0).unwrap();
        assert!((ap - a - period_only).abs() < 1e-12);
        let (_, grad) = log_posterior_grad(
            &ParamVector::zeros(&ParamLayout::new(Family::Ap, 3, 3)),
            &table(3, 3, vec![1; 9], vec![1.0; 9]),
            &ModelSpec::new(Family::Ap),
        )
        .unwrap();
        assert_eq!(grad.len(), ParamLayout::new(Family::Ap, 3, 3).dim);
    }

    #[test]
    fn anchor_uses_variance() {
        let spec = ModelSpec::new(Family::A);
        let layout = ParamLayout::new(Family::A, 3, 3);
        let mut p = ParamVector::zeros(&layout);
        let base = log_prior(&p, &spec).unwrap();
        p.theta[0] = 0.1;
        let moved = log_prior(&p, &spec).unwrap();
        // theta1 also enters the RW(2) term: (0.1)^2 / 2 at tau = 1
        let anchor_change = (-0.5 - 0.5 * (2.0 * std::f64::consts::PI * 0.01).ln())
            - normal_logpdf(0.0, 0.0, 0.01);
        assert!((moved - base - (anchor_change - 0.005)).abs() < 1e-12);
    }

    #[test]
    fn gamma_prior_swaps_precision_term() {
        let layout = ParamLayout::new(Family::A, 3, 3);
        let mut p = ParamVector::zeros(&layout);
        p.log_tau[0] = 0.7;
        let sb = log_prior(&p, &ModelSpec::new(Family::A)).unwrap();
        let ga = log_prior(&p, &ModelSpec::new(Family::A).with_prior(PrecisionPrior::gamma_default())).unwrap();
        let tau = 0.7f64.exp();
        let diff = gamma_logpdf(tau, 0.001, 0.001).unwrap() - sbeta2_logpdf(tau, 0.5, 0.5, 100.0).unwrap();
        assert!((ga - sb - diff).abs() < 1e-10);
    }

    #[test]
    fn score_vanishes_at_saturation() {
        // y = mu = 1 everywhere at the zero point
        let t = table(3, 4, vec![1; 12], vec![1.0; 12]);
        let spec = ModelSpec::new(Family::Apc);
        let post = ApcPosterior::new(&spec, &t).unwrap();
        let x = vec![0.0; post.layout().dim];
        let mut g = vec![0.0; x.len()];
        post.likelihood_at(&x, Some(&mut g)).unwrap();
        assert_eq!(g[0], 0.0);
    }

    fn fd_check(post: &ApcPosterior, x: &[f64]) {
        let mut g = vec![0.0; x.len()];
        let lp = post.log_posterior_grad_at(x, &mut g).unwrap();
        let f = |y: &[f64]| post.log_likelihood_at(y).unwrap() + post.log_prior_at(y).unwrap();
        assert_eq!(lp, f(x));
        let h = 1e-5;
        for i in 0..x.len() {
            let mut up = x.to_vec();
            let mut dn = x.to_vec();
            up[i] += h;
            dn[i] -= h;
            let fd = (f(&up) - f(&dn)) / (2.0 * h);
            let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1.0);
            assert!(rel <= 1e-5, "coord {i}: analytic {} vs fd {fd}", g[i]);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for family in Family::ALL {
            for prior in [PrecisionPrior::default(), PrecisionPrior::gamma_default()] {
                let t = random_table(&mut rng, 3, 4);
                let spec = ModelSpec::new(family).with_prior(prior);
                let post = ApcPosterior::new(&spec, &t).unwrap();
                let x = random_point(&mut rng, post.layout());
                fd_check(&post, &x);
            }
        }
    }

    #[test]
    fn center_effects_examples() {
        let m = Matrix::from_row_major(2, 3, vec![2.0, 2.0, 2.0, 1.0, 2.0, 3.0]).unwrap();
        let c = center_effects(&m);
        assert_eq!(c.as_slice(), &[0.0, 0.0, 0.0, -1.0, 0.0, 1.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f64> = (0..100 * 21).map(|_| rng.random_range(-5.0..5.0)).collect();
        let c = center_effects(&Matrix::from_row_major(100, 21, data).unwrap());
        for r in 0..100 {
            let s: f64 = (0..21).map(|j| c.get(r, j)).sum();
            assert!(s.abs() <= 1e-12);
        }
    }

    proptest! {
        #[test]
        fn rw2_ignores_linear_trends(
            x in proptest::collection::vec(-5.0f64..5.0, 3..12),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
            tau in 0.01f64..50.0,
        ) {
            let shifted: Vec<f64> = x.iter().enumerate().map(|(i, v)| v + a + b * i as f64).collect();
            let l0 = rw2_logpdf(&x, tau).unwrap();
            let l1 = rw2_logpdf(&shifted, tau).unwrap();
            prop_assert!((l0 - l1).abs() <= 1e-8 * l0.abs().max(1.0));
        }

        #[test]
        fn age_intercept_slack(shift in -2.0f64..2.0, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = random_table(&mut rng, 3, 3);
            let spec = ModelSpec::new(Family::Apc);
            let layout = ParamLayout::for_table(&spec, &t);
            let p = ParamVector::from_unconstrained(&layout, &random_point(&mut rng, &layout)).unwrap();
            let mut q = p.clone();
            q.lambda0 -= shift;
            q.theta.iter_mut().for_each(|v| *v += shift);
            let l0 = log_likelihood(&p, &t, &spec).unwrap();
            let l1 = log_likelihood(&q, &t, &spec).unwrap();
            prop_assert!((l0 - l1).abs() <= 1e-9 * l0.abs().max(1.0));
            let pr0 = log_prior(&p, &spec).unwrap();
            let pr1 = log_prior(&q, &spec).unwrap();
            if shift.abs() > 1e-6 {
                prop_assert!(pr0 != pr1);
            }
        }
    }
}
