use serde::{Deserialize, Serialize};

use super::{Family, ModelSpec};
use crate::data::ApcTable;
use crate::error::{ApcError, Result};

/// Effect block of the linear predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Block {
    Age,
    Period,
    Cohort,
}

impl Block {
    pub fn name(self) -> &'static str {
        match self {
            Block::Age => "age",
            Block::Period => "period",
            Block::Cohort => "cohort",
        }
    }
}

/// Positions of each parameter group inside the unconstrained vector
/// `[λ0, θ_1..θ_A, φ_2..φ_T, α_1..α_C, log τ...]`.
///
/// φ_1 is fixed at zero and never sampled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub family: Family,
    pub n_age: usize,
    pub n_period: usize,
    pub n_cohort: usize,
    pub theta: usize,
    pub phi: Option<usize>,
    pub alpha: Option<usize>,
    pub log_tau: usize,
    pub dim: usize,
}

impl ParamLayout {
    pub fn new(family: Family, n_age: usize, n_period: usize) -> Self {
        let n_cohort = n_age - 1 + n_period;
        let theta = 1;
        let mut next = theta + n_age;
        let phi = family.has_period().then(|| {
            let start = next;
            next += n_period - 1;
            start
        });
        let alpha = family.has_cohort().then(|| {
            let start = next;
            next += n_cohort;
            start
        });
        let log_tau = next;
        let dim = log_tau + 1 + usize::from(phi.is_some()) + usize::from(alpha.is_some());
        ParamLayout {
            family,
            n_age,
            n_period,
            n_cohort,
            theta,
            phi,
            alpha,
            log_tau,
            dim,
        }
    }

    pub fn for_table(spec: &ModelSpec, table: &ApcTable) -> Self {
        Self::new(spec.family, table.n_age(), table.n_period())
    }

    /// Active blocks in storage order.
    pub fn blocks(&self) -> Vec<Block> {
        let mut blocks = vec![Block::Age];
        if self.phi.is_some() {
            blocks.push(Block::Period);
        }
        if self.alpha.is_some() {
            blocks.push(Block::Cohort);
        }
        blocks
    }

    /// Index of log τ for `block` in the unconstrained vector.
    pub fn log_tau_index(&self, block: Block) -> Option<usize> {
        self.blocks()
            .iter()
            .position(|b| *b == block)
            .map(|i| self.log_tau + i)
    }

    /// Number of levels reported for `block` (φ_1 included).
    pub fn levels(&self, block: Block) -> usize {
        match block {
            Block::Age => self.n_age,
            Block::Period => self.n_period,
            Block::Cohort => self.n_cohort,
        }
    }

    /// Full effect levels of `block` from an unconstrained vector, with the
    /// fixed φ_1 = 0 restored. `None` when the block is inactive.
    pub fn effect_levels(&self, x: &[f64], block: Block) -> Option<Vec<f64>> {
        match block {
            Block::Age => Some(x[self.theta..self.theta + self.n_age].to_vec()),
            Block::Period => self.phi.map(|start| {
                std::iter::once(0.0)
                    .chain(x[start..start + self.n_period - 1].iter().copied())
                    .collect()
            }),
            Block::Cohort => self.alpha.map(|start| x[start..start + self.n_cohort].to_vec()),
        }
    }

    /// Names aligned with the unconstrained vector.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.dim);
        names.push("lambda0".to_string());
        names.extend((1..=self.n_age).map(|a| format!("theta[{a}]")));
        if self.phi.is_some() {
            names.extend((2..=self.n_period).map(|t| format!("phi[{t}]")));
        }
        if self.alpha.is_some() {
            names.extend((1..=self.n_cohort).map(|c| format!("alpha[{c}]")));
        }
        for block in self.blocks() {
            names.push(format!("log_tau_{}", block.name()));
        }
        names
    }
}

/// Structured view of one parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub lambda0: f64,
    /// Age effects, length A.
    pub theta: Vec<f64>,
    /// Period effects, length T with `phi[0] == 0`; absent for AC and A.
    pub phi: Option<Vec<f64>>,
    /// Cohort effects, length C; absent for AP and A.
    pub alpha: Option<Vec<f64>>,
    /// One log-precision per active block, in age, period, cohort order.
    pub log_tau: Vec<f64>,
}

impl ParamVector {
    /// All-zero point (τ = 1) shaped for `layout`.
    pub fn zeros(layout: &ParamLayout) -> Self {
        ParamVector::from_unconstrained(layout, &vec![0.0; layout.dim])
            .expect("zero vector has layout dimension")
    }

    pub fn family(&self) -> Family {
        match (self.phi.is_some(), self.alpha.is_some()) {
            (true, true) => Family::Apc,
            (true, false) => Family::Ap,
            (false, true) => Family::Ac,
            (false, false) => Family::A,
        }
    }

    pub fn from_unconstrained(layout: &ParamLayout, x: &[f64]) -> Result<Self> {
        if x.len() != layout.dim {
            return Err(ApcError::domain(format!(
                "parameter vector has {} entries, layout expects {}",
                x.len(),
                layout.dim
            )));
        }
        Ok(ParamVector {
            lambda0: x[0],
            theta: layout.effect_levels(x, Block::Age).unwrap_or_default(),
            phi: layout.effect_levels(x, Block::Period),
            alpha: layout.effect_levels(x, Block::Cohort),
            log_tau: x[layout.log_tau..].to_vec(),
        })
    }

    /// Flattens into the sampler's unconstrained vector. Fails when the
    /// block lengths disagree with `layout` or φ_1 ≠ 0.
    pub fn to_unconstrained(&self, layout: &ParamLayout) -> Result<Vec<f64>> {
        self.check(layout)?;
        let mut x = Vec::with_capacity(layout.dim);
        x.push(self.lambda0);
        x.extend_from_slice(&self.theta);
        if let Some(phi) = &self.phi {
            x.extend_from_slice(&phi[1..]);
        }
        if let Some(alpha) = &self.alpha {
            x.extend_from_slice(alpha);
        }
        x.extend_from_slice(&self.log_tau);
        Ok(x)
    }

    pub fn check(&self, layout: &ParamLayout) -> Result<()> {
        let mismatch = |what: &str, got: usize, want: usize| {
            Err(ApcError::domain(format!("{what} has length {got}, expected {want}")))
        };
        if self.family() != layout.family {
            return Err(ApcError::domain(format!(
                "parameter blocks describe a {} model, layout is {}",
                self.family(),
                layout.family
            )));
        }
        if self.theta.len() != layout.n_age {
            return mismatch("theta", self.theta.len(), layout.n_age);
        }
        if let Some(phi) = &self.phi {
            if phi.len() != layout.n_period {
                return mismatch("phi", phi.len(), layout.n_period);
            }
            if phi[0] != 0.0 {
                return Err(ApcError::domain("phi[1] is fixed at 0"));
            }
        }
        if let Some(alpha) = &self.alpha {
            if alpha.len() != layout.n_cohort {
                return mismatch("alpha", alpha.len(), layout.n_cohort);
            }
        }
        let n_tau = layout.blocks().len();
        if self.log_tau.len() != n_tau {
            return mismatch("log_tau", self.log_tau.len(), n_tau);
        }
        Ok(())
    }
}
