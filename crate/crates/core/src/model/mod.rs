//! Poisson age-period-cohort model family with RW(2) smoothing priors.

mod density;
mod layout;

pub use density::{
    center_effects, gamma_logpdf, log_likelihood, log_posterior, log_posterior_grad, log_prior,
    normal_logpdf, pointwise_log_likelihood, rw2_logpdf, sbeta2_logpdf, ApcPosterior,
};
pub use layout::{Block, ParamLayout, ParamVector};

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ApcError, Result};

/// Which effect blocks enter the linear predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "APC")]
    Apc,
    #[serde(rename = "AP")]
    Ap,
    #[serde(rename = "AC")]
    Ac,
    #[serde(rename = "A")]
    A,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Apc, Family::Ap, Family::Ac, Family::A];

    pub fn has_period(self) -> bool {
        matches!(self, Family::Apc | Family::Ap)
    }

    pub fn has_cohort(self) -> bool {
        matches!(self, Family::Apc | Family::Ac)
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Apc => "APC",
            Family::Ap => "AP",
            Family::Ac => "AC",
            Family::A => "A",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = ApcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "APC" => Ok(Family::Apc),
            "AP" => Ok(Family::Ap),
            "AC" => Ok(Family::Ac),
            "A" => Ok(Family::A),
            other => Err(ApcError::validation(format!("unknown model family `{other}`"))),
        }
    }
}

/// Hyperprior on each RW(2) precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrecisionPrior {
    /// Scaled Beta2 with shape parameters `p`, `q` and scale `b`.
    ScaledBeta2 { p: f64, q: f64, b: f64 },
    /// Gamma with shape and rate.
    Gamma { shape: f64, rate: f64 },
}

impl Default for PrecisionPrior {
    fn default() -> Self {
        PrecisionPrior::ScaledBeta2 {
            p: 0.5,
            q: 0.5,
            b: 100.0,
        }
    }
}

impl PrecisionPrior {
    pub fn gamma_default() -> Self {
        PrecisionPrior::Gamma {
            shape: 0.001,
            rate: 0.001,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            PrecisionPrior::ScaledBeta2 { p, q, b } => [p, q, b].iter().all(|v| v.is_finite() && *v > 0.0),
            PrecisionPrior::Gamma { shape, rate } => {
                [shape, rate].iter().all(|v| v.is_finite() && *v > 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(ApcError::validation(format!(
                "precision prior parameters must be positive: {self}"
            )))
        }
    }
}

impl fmt::Display for PrecisionPrior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PrecisionPrior::ScaledBeta2 { p, q, b } => write!(f, "SB2({p}, {q}, {b})"),
            PrecisionPrior::Gamma { shape, rate } => write!(f, "G({shape}, {rate})"),
        }
    }
}

/// Sign of the log-exposure offset in the linear predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OffsetMode {
    /// log μ = η + log p; exp(η) is the rate per person-year.
    #[default]
    Standard,
    /// log μ = η − log p, the offset subtracted.
    PaperLiteral,
}

impl OffsetMode {
    pub(crate) fn sign(self) -> f64 {
        match self {
            OffsetMode::Standard => 1.0,
            OffsetMode::PaperLiteral => -1.0,
        }
    }
}

impl std::str::FromStr for OffsetMode {
    type Err = ApcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "standard" => Ok(OffsetMode::Standard),
            "paper-literal" | "literal" => Ok(OffsetMode::PaperLiteral),
            other => Err(ApcError::validation(format!("unknown offset mode `{other}`"))),
        }
    }
}

/// Identification constraints and fixed prior scales. All values are
/// standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraints {
    /// Prior sd of the intercept.
    pub intercept_sd: f64,
    /// Soft anchor on the first age effect.
    pub age_first_sd: f64,
    /// Soft anchors on the two pinned cohort effects.
    pub cohort_anchor_sd: f64,
    /// Prior sd on leading RW(2) levels that no constraint pins.
    pub diffuse_sd: f64,
    /// 1-based index of the first anchored cohort; its successor is
    /// anchored too. Clamped to `1..=C-1`.
    pub cohort_anchor: usize,
}

impl Default for Constraints {
    fn default() -> Self {
        Constraints {
            intercept_sd: 1.0,
            age_first_sd: 0.1,
            cohort_anchor_sd: 0.05,
            diffuse_sd: 10.0,
            cohort_anchor: 10,
        }
    }
}

impl Constraints {
    /// First anchored cohort for a table with `n_cohort` diagonals.
    pub fn anchor_for(&self, n_cohort: usize) -> usize {
        self.cohort_anchor.clamp(1, n_cohort - 1)
    }

    fn validate(&self) -> Result<()> {
        let sds = [
            ("intercept_sd", self.intercept_sd),
            ("age_first_sd", self.age_first_sd),
            ("cohort_anchor_sd", self.cohort_anchor_sd),
            ("diffuse_sd", self.diffuse_sd),
        ];
        for (name, sd) in sds {
            if !(sd.is_finite() && sd > 0.0) {
                return Err(ApcError::validation(format!("{name} must be positive (got {sd})")));
            }
        }
        if self.cohort_anchor == 0 {
            return Err(ApcError::validation("cohort anchor index is 1-based"));
        }
        Ok(())
    }
}

/// Full description of one model variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub precision_prior: PrecisionPrior,
    pub constraints: Constraints,
    pub offset_mode: OffsetMode,
    pub center_for_report: bool,
}

impl ModelSpec {
    pub fn new(family: Family) -> Self {
        ModelSpec {
            family,
            precision_prior: PrecisionPrior::default(),
            constraints: Constraints::default(),
            offset_mode: OffsetMode::Standard,
            center_for_report: true,
        }
    }

    pub fn with_prior(mut self, prior: PrecisionPrior) -> Self {
        self.precision_prior = prior;
        self
    }

    pub fn with_offset_mode(mut self, mode: OffsetMode) -> Self {
        self.offset_mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.precision_prior.validate()?;
        self.constraints.validate()
    }

    /// Row label used in comparison tables, e.g. `APC, SB2(0.5, 0.5, 100) prior`.
    /// The prior is named for the full model and for any non-default choice.
    pub fn label(&self) -> String {
        if self.family != Family::Apc && self.precision_prior == PrecisionPrior::default() {
            self.family.name().to_string()
        } else {
            format!("{}, {} prior", self.family, self.precision_prior)
        }
    }
}
