//! Multi-chain NUTS sampling with warmup adaptation.

mod adapt;
mod diagnostics;
mod draws;
mod nuts;

pub use adapt::{DualAverage, DualAverageSettings, RunningCovariance, RunningVariance, WindowSchedule};
pub use diagnostics::{ess_bulk, ess_bulk_chains, split_rhat, split_rhat_chains, Rhat, ESS_CAP_FACTOR};
pub use draws::{ChainStats, DrawStats, ParamSummary, PosteriorDraws};
pub use nuts::{Transition, MAX_ENERGY_ERROR};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ApcTable;
use crate::error::{ApcError, Result};
use crate::model::{ApcPosterior, ModelSpec, OffsetMode, ParamLayout, ParamVector};
use nuts::{Metric, NutsChain};

/// A differentiable log-density on an unconstrained space.
///
/// Implementations must be pure: chains call them concurrently.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Log-density at `x` (up to a constant); writes the gradient into `grad`.
    fn logp_grad(&self, x: &[f64], grad: &mut [f64]) -> Result<f64>;
}

/// Form of the adapted mass matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Diagonal,
    /// Full covariance; handles the strongly correlated trend directions of
    /// the APC posterior.
    #[default]
    Dense,
}

impl std::str::FromStr for MetricKind {
    type Err = ApcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diagonal" | "diag" => Ok(MetricKind::Diagonal),
            "dense" => Ok(MetricKind::Dense),
            other => Err(ApcError::validation(format!("unknown metric '{other}', expected diagonal or dense"))),
        }
    }
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MetricKind::Diagonal => "diagonal",
            MetricKind::Dense => "dense",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub chains: usize,
    pub warmup_iters: usize,
    pub sampling_iters: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub metric: MetricKind,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            chains: 4,
            warmup_iters: 1000,
            sampling_iters: 1000,
            target_accept: 0.8,
            max_tree_depth: 10,
            base_seed: 0,
            metric: MetricKind::default(),
        }
    }
}

impl SamplerConfig {
    pub fn with_seed(seed: u64) -> Self {
        SamplerConfig {
            base_seed: seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 || self.warmup_iters == 0 || self.sampling_iters == 0 || self.max_tree_depth == 0 {
            return Err(ApcError::validation(
                "chains, warmup_iters, sampling_iters and max_tree_depth must all be at least 1",
            ));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(ApcError::validation(format!(
                "target_accept must lie strictly inside (0, 1), got {}",
                self.target_accept
            )));
        }
        Ok(())
    }

    fn chain_seed(&self, chain: usize) -> u64 {
        self.base_seed.wrapping_add(chain as u64)
    }
}

/// RNG for chain transitions; stream 0 of the chain seed.
fn transition_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// RNG for initial values; stream 1 of the chain seed.
fn init_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

struct ChainOutput {
    draws: Vec<f64>,
    draw_stats: Vec<DrawStats>,
    stats: ChainStats,
}

fn run_chain<D: LogDensity>(density: &D, config: &SamplerConfig, chain: usize, init: Vec<f64>) -> Result<ChainOutput> {
    let dim = density.dim();
    if init.len() != dim {
        return Err(ApcError::Start {
            chain,
            message: format!("initial point has {} entries, density has {dim}", init.len()),
        });
    }
    let rng = transition_rng(config.chain_seed(chain));
    let mut nuts = NutsChain::new(density, init, rng, config.max_tree_depth).ok_or_else(|| ApcError::Start {
        chain,
        message: "log-density is not finite at the initial point".into(),
    })?;

    nuts.init_step_size();
    let mut step_adapt = DualAverage::new(DualAverageSettings::new(config.target_accept), nuts.step_size);
    let mut schedule = WindowSchedule::new(config.warmup_iters);
    let mut variance = RunningVariance::new(dim);
    let mut covariance = RunningCovariance::new(if config.metric == MetricKind::Dense { dim } else { 0 });
    let mut warmup_divergent = 0usize;

    for _ in 0..config.warmup_iters {
        let t = nuts.transition();
        warmup_divergent += usize::from(t.divergent);
        nuts.step_size = step_adapt.advance(t.accept_stat);
        if schedule.in_slow_window() {
            match config.metric {
                MetricKind::Diagonal => variance.add(&nuts.current.q),
                MetricKind::Dense => covariance.add(&nuts.current.q),
            }
        }
        if schedule.step() {
            nuts.metric = match config.metric {
                MetricKind::Diagonal => Metric::Diagonal(variance.regularized_variance()),
                // the ridge keeps the estimate positive definite; fall back to
                // its diagonal should rounding say otherwise
                MetricKind::Dense => {
                    let cov = covariance.regularized_covariance();
                    Metric::dense(&cov, dim)
                        .unwrap_or_else(|| Metric::Diagonal((0..dim).map(|i| cov[i * dim + i]).collect()))
                }
            };
            variance.reset();
            covariance.reset();
            nuts.init_step_size();
            step_adapt.restart(nuts.step_size);
        }
    }
    if warmup_divergent == config.warmup_iters {
        return Err(ApcError::Adaptation {
            chain,
            message: format!("all {} warmup transitions diverged", config.warmup_iters),
        });
    }
    nuts.step_size = step_adapt.final_step();
    if !(nuts.step_size.is_finite() && nuts.step_size > 0.0) {
        return Err(ApcError::Adaptation {
            chain,
            message: format!("adapted step size {} is unusable", nuts.step_size),
        });
    }

    let mut draws = Vec::with_capacity(config.sampling_iters * dim);
    let mut draw_stats = Vec::with_capacity(config.sampling_iters);
    let mut divergences = 0;
    for _ in 0..config.sampling_iters {
        let t = nuts.transition();
        divergences += usize::from(t.divergent);
        draws.extend_from_slice(&nuts.current.q);
        draw_stats.push(DrawStats {
            lp: t.logp,
            accept_stat: t.accept_stat,
            tree_depth: t.depth,
            n_leapfrog: t.n_leapfrog,
            divergent: t.divergent,
        });
    }
    let n = draw_stats.len() as f64;
    Ok(ChainOutput {
        stats: ChainStats {
            divergences,
            warmup_divergences: warmup_divergent,
            step_size: nuts.step_size,
            inv_mass_diag: nuts.metric.diagonal(),
            mean_accept_stat: draw_stats.iter().map(|d| d.accept_stat).sum::<f64>() / n,
            max_depth_hits: draw_stats.iter().filter(|d| d.tree_depth >= config.max_tree_depth).count(),
        },
        draws,
        draw_stats,
    })
}

/// Runs `config.chains` chains of NUTS against any log-density.
///
/// `init(chain, rng)` supplies each chain's starting point. Chains run in
/// parallel; results are merged in chain order.
pub fn run_chains<D, F>(density: &D, config: &SamplerConfig, param_names: Vec<String>, init: F) -> Result<PosteriorDraws>
where
    D: LogDensity,
    F: Fn(usize, &mut ChaCha8Rng) -> Vec<f64> + Sync,
{
    config.validate()?;
    if param_names.len() != density.dim() {
        return Err(ApcError::domain(format!(
            "{} parameter names for a {}-dimensional density",
            param_names.len(),
            density.dim()
        )));
    }
    let outputs: Vec<Result<ChainOutput>> = (0..config.chains)
        .into_par_iter()
        .map(|chain| {
            let mut rng = init_rng(config.chain_seed(chain));
            let x0 = init(chain, &mut rng);
            run_chain(density, config, chain, x0)
        })
        .collect();
    let mut values = Vec::with_capacity(config.chains * config.sampling_iters * density.dim());
    let mut chain_stats = Vec::with_capacity(config.chains);
    let mut draw_stats = Vec::with_capacity(config.chains * config.sampling_iters);
    for out in outputs {
        let out = out?;
        values.extend(out.draws);
        draw_stats.extend(out.draw_stats);
        chain_stats.push(out.stats);
    }
    PosteriorDraws::new(param_names, config.chains, config.sampling_iters, values, chain_stats, draw_stats)
}

/// Starting point for one chain: intercept at the constant-rate MLE,
/// effects uniform on (−0.1, 0.1), log-precisions uniform on (−1, 1).
pub fn initialize(spec: &ModelSpec, table: &ApcTable, seed: u64) -> Result<ParamVector> {
    let mut rng = init_rng(seed);
    initialize_with(spec, table, &mut rng)
}

fn initialize_with(spec: &ModelSpec, table: &ApcTable, rng: &mut ChaCha8Rng) -> Result<ParamVector> {
    spec.validate()?;
    if table.n_cells() == 0 {
        return Err(ApcError::validation("table is empty"));
    }
    let layout = ParamLayout::for_table(spec, table);
    let births = (table.total_births() as f64).max(0.5);
    let scale: f64 = match spec.offset_mode {
        OffsetMode::Standard => table.total_exposure(),
        OffsetMode::PaperLiteral => table.exposures_flat().iter().map(|p| 1.0 / p).sum(),
    };
    let mut x = vec![0.0; layout.dim];
    x[0] = (births / scale).ln();
    for v in &mut x[1..layout.log_tau] {
        *v = rng.random_range(-0.1..0.1);
    }
    for v in &mut x[layout.log_tau..] {
        *v = rng.random_range(-1.0..1.0);
    }
    ParamVector::from_unconstrained(&layout, &x)
}

/// Samples the posterior of `spec` on `table`.
///
/// Bit-for-bit reproducible for fixed inputs: chain `i` uses seed
/// `base_seed + i` for both its initial point and its transitions.
pub fn sample(spec: &ModelSpec, table: &ApcTable, config: &SamplerConfig) -> Result<PosteriorDraws> {
    let posterior = ApcPosterior::new(spec, table)?;
    let layout = posterior.layout().clone();
    let inits: Vec<Vec<f64>> = (0..config.chains)
        .map(|chain| {
            initialize(spec, table, config.chain_seed(chain)).and_then(|p| p.to_unconstrained(&layout))
        })
        .collect::<Result<_>>()?;
    run_chains(&posterior, config, layout.param_names(), |chain, _| inits[chain].clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::band_labels;
    use crate::model::Family;

    pub(crate) struct StdNormal(pub usize);

    impl LogDensity for StdNormal {
        fn dim(&self) -> usize {
            self.0
        }

        fn logp_grad(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
            for (g, v) in grad.iter_mut().zip(x) {
                *g = -v;
            }
            Ok(-0.5 * x.iter().map(|v| v * v).sum::<f64>())
        }
    }

    fn names(d: usize) -> Vec<String> {
        (0..d).map(|i| format!("x{i}")).collect()
    }

    #[test]
    fn gaussian_moments() {
        let config = SamplerConfig {
            chains: 4,
            warmup_iters: 500,
            sampling_iters: 1000,
            ..SamplerConfig::with_seed(42)
        };
        let draws = run_chains(&StdNormal(5), &config, names(5), |_, rng| {
            (0..5).map(|_| rng.random_range(-2.0..2.0)).collect()
        })
        .unwrap();
        assert_eq!(draws.n_draws(), 4000);
        let ess = ess_bulk(&draws).unwrap();
        for j in 0..5 {
            let col = draws.column(j);
            let n = col.len() as f64;
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            let mcse = (var / ess[j]).sqrt();
            assert!(mean.abs() < 3.0 * mcse, "coord {j}: mean {mean}, mcse {mcse}");
            assert!((var - 1.0).abs() < 0.1, "coord {j}: var {var}");
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let config = SamplerConfig {
            chains: 2,
            warmup_iters: 100,
            sampling_iters: 50,
            ..SamplerConfig::with_seed(7)
        };
        let run = || {
            run_chains(&StdNormal(3), &config, names(3), |_, rng| {
                (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()
            })
            .unwrap()
        };
        assert_eq!(run().values(), run().values());
    }

    struct Broken;

    impl LogDensity for Broken {
        fn dim(&self) -> usize {
            1
        }

        fn logp_grad(&self, _: &[f64], _: &mut [f64]) -> Result<f64> {
            Ok(f64::NAN)
        }
    }

    #[test]
    fn non_finite_start_is_error() {
        let config = SamplerConfig {
            chains: 1,
            warmup_iters: 10,
            sampling_iters: 10,
            ..SamplerConfig::default()
        };
        let err = run_chains(&Broken, &config, names(1), |_, _| vec![0.0]).unwrap_err();
        assert!(matches!(err, ApcError::Start { chain: 0, .. }));
    }

    /// Finite only at the origin; every proposal diverges.
    struct Spike;

    impl LogDensity for Spike {
        fn dim(&self) -> usize {
            1
        }

        fn logp_grad(&self, x: &[f64], grad: &mut [f64]) -> Result<f64> {
            grad[0] = 0.0;
            Ok(if x[0] == 0.0 { 0.0 } else { f64::NEG_INFINITY })
        }
    }

    #[test]
    fn all_divergent_warmup_is_error() {
        let config = SamplerConfig {
            chains: 1,
            warmup_iters: 30,
            sampling_iters: 10,
            ..SamplerConfig::default()
        };
        let err = run_chains(&Spike, &config, names(1), |_, _| vec![0.0]).unwrap_err();
        assert!(matches!(err, ApcError::Adaptation { .. }), "{err}");
    }

    #[test]
    fn config_validation() {
        let mut c = SamplerConfig::default();
        c.target_accept = 1.0;
        assert!(c.validate().is_err());
        let mut c = SamplerConfig::default();
        c.chains = 0;
        assert!(c.validate().is_err());
    }

    fn unit_rate_table() -> ApcTable {
        ApcTable::new(band_labels(15, 5, 3), band_labels(2000, 5, 3), vec![40; 9], vec![40.0; 9], 5).unwrap()
    }

    #[test]
    fn init_is_deterministic_and_centered_on_rate() {
        let t = unit_rate_table();
        let spec = ModelSpec::new(Family::Apc);
        let a = initialize(&spec, &t, 9).unwrap();
        let b = initialize(&spec, &t, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.lambda0, 0.0);
        assert!(a.theta.iter().all(|v| v.abs() < 0.1));
        assert!(a.log_tau.iter().all(|v| v.abs() < 1.0));
        assert_eq!(a.phi.as_ref().unwrap()[0], 0.0);
        assert_ne!(a, initialize(&spec, &t, 10).unwrap());
    }
}
