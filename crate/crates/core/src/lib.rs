//! Bayesian age-period-cohort models for event/exposure tables.
//!
//! Poisson likelihood with a log-exposure offset, second-order random walk
//! priors on each effect block, Scaled Beta2 (or Gamma) hyperpriors on the
//! precisions, soft identification constraints, a NUTS sampler, and the
//! model-comparison criteria WAIC, PSIS-LOO, RSS shares and effect areas.

pub mod comparison;
pub mod data;
pub mod error;
pub mod model;
pub mod reporting;
pub mod sampler;
pub mod simulate;
pub mod stats;

pub use comparison::{psis_loo, waic, ComparisonReport, PointwiseLogLik};
pub use data::{asfr, cohort_index, load_table, tfr, ApcTable, Matrix, TableFormat};
pub use error::{ApcError, Result};
pub use model::{Family, ModelSpec, OffsetMode, ParamVector, PrecisionPrior};
pub use sampler::{sample, MetricKind, PosteriorDraws, SamplerConfig};
