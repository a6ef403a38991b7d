use std::path::Path;

use serde::{Deserialize, Serialize};

use super::diagnostics::{ess_bulk_chains, split_rhat_chains};
use crate::error::{ApcError, Result};
use crate::stats;

/// Per-chain results of adaptation and sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainStats {
    /// Divergent transitions after warmup.
    pub divergences: usize,
    pub warmup_divergences: usize,
    pub step_size: f64,
    /// Diagonal of the inverse mass matrix (posterior variance estimate).
    pub inv_mass_diag: Vec<f64>,
    pub mean_accept_stat: f64,
    pub max_depth_hits: usize,
}

/// Sampler statistics for one stored draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrawStats {
    pub lp: f64,
    pub accept_stat: f64,
    pub tree_depth: usize,
    pub n_leapfrog: usize,
    pub divergent: bool,
}

/// Posterior summary of one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummary {
    pub name: String,
    pub mean: f64,
    pub median: f64,
    pub sd: f64,
    #[serde(rename = "q2.5")]
    pub q2_5: f64,
    #[serde(rename = "q97.5")]
    pub q97_5: f64,
    pub rhat: Option<f64>,
    pub ess_bulk: Option<f64>,
}

/// Post-warmup draws of all chains, stored row-major in chain order.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    param_names: Vec<String>,
    chains: usize,
    draws_per_chain: usize,
    values: Vec<f64>,
    chain_stats: Vec<ChainStats>,
    draw_stats: Vec<DrawStats>,
}

impl PosteriorDraws {
    pub fn new(
        param_names: Vec<String>,
        chains: usize,
        draws_per_chain: usize,
        values: Vec<f64>,
        chain_stats: Vec<ChainStats>,
        draw_stats: Vec<DrawStats>,
    ) -> Result<Self> {
        let dim = param_names.len();
        if values.len() != chains * draws_per_chain * dim {
            return Err(ApcError::domain(format!(
                "{} values for {chains} chains x {draws_per_chain} draws x {dim} parameters",
                values.len()
            )));
        }
        Ok(PosteriorDraws {
            param_names,
            chains,
            draws_per_chain,
            values,
            chain_stats,
            draw_stats,
        })
    }

    pub fn param_names(&self) -> &[String] {
        &self.param_names
    }

    pub fn dim(&self) -> usize {
        self.param_names.len()
    }

    pub fn chains(&self) -> usize {
        self.chains
    }

    pub fn draws_per_chain(&self) -> usize {
        self.draws_per_chain
    }

    /// Total rows, chains × draws per chain.
    pub fn n_draws(&self) -> usize {
        self.chains * self.draws_per_chain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.dim().max(1))
    }

    pub fn chain_of_row(&self, i: usize) -> usize {
        i / self.draws_per_chain
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// Draws of parameter `j`, one vector per chain.
    pub fn chain_columns(&self, j: usize) -> Vec<Vec<f64>> {
        (0..self.chains)
            .map(|c| {
                (0..self.draws_per_chain)
                    .map(|i| self.row(c * self.draws_per_chain + i)[j])
                    .collect()
            })
            .collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.param_names.iter().position(|n| n == name)
    }

    pub fn chain_stats(&self) -> &[ChainStats] {
        &self.chain_stats
    }

    pub fn draw_stats(&self) -> &[DrawStats] {
        &self.draw_stats
    }

    pub fn divergences(&self) -> usize {
        self.chain_stats.iter().map(|c| c.divergences).sum()
    }

    /// Same draws with a subset of rows, for tests and thinning.
    pub fn map_values(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        let values: Vec<f64> = self.rows().flat_map(f).collect();
        PosteriorDraws::new(
            self.param_names.clone(),
            self.chains,
            self.draws_per_chain,
            values,
            self.chain_stats.clone(),
            self.draw_stats.clone(),
        )
    }

    /// Writes `chain,iteration,<params...>`, one row per draw. Chains and
    /// iterations are 1-based.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()).map_err(|e| ApcError::io(path, e))
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 20);
        out.push_str("chain,iteration");
        for name in &self.param_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (i, row) in self.rows().enumerate() {
            let chain = i / self.draws_per_chain + 1;
            let iteration = i % self.draws_per_chain + 1;
            out.push_str(&format!("{chain},{iteration}"));
            for v in row {
                out.push_str(&format!(",{v:?}"));
            }
            out.push('\n');
        }
        out
    }

    /// Reads a draws CSV written by [`PosteriorDraws::write_csv`]. Sampler
    /// statistics are not part of the file and come back empty.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let format_err = |message: String| ApcError::Format {
            path: path.to_path_buf(),
            message,
        };
        let mut reader = csv::Reader::from_path(path).map_err(|e| format_err(e.to_string()))?;
        let headers = reader.headers().map_err(|e| format_err(e.to_string()))?.clone();
        if headers.get(0) != Some("chain") || headers.get(1) != Some("iteration") {
            return Err(format_err("draws file must start with `chain,iteration`".into()));
        }
        let names: Vec<String> = headers.iter().skip(2).map(str::to_string).collect();
        let mut values = Vec::new();
        let mut per_chain: Vec<usize> = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| format_err(e.to_string()))?;
            let chain: usize = record[0]
                .parse()
                .map_err(|_| format_err(format!("bad chain id `{}`", &record[0])))?;
            if chain == 0 || chain > per_chain.len() + 1 {
                return Err(format_err(format!("chains must appear in order, found {chain}")));
            }
            if chain > per_chain.len() {
                per_chain.push(0);
            }
            per_chain[chain - 1] += 1;
            for field in record.iter().skip(2) {
                values.push(
                    field
                        .parse::<f64>()
                        .map_err(|_| format_err(format!("bad value `{field}`")))?,
                );
            }
        }
        let draws_per_chain = per_chain.first().copied().unwrap_or(0);
        if per_chain.iter().any(|n| *n != draws_per_chain) {
            return Err(format_err("chains have different lengths".into()));
        }
        PosteriorDraws::new(names, per_chain.len(), draws_per_chain, values, Vec::new(), Vec::new())
    }

    /// Mean, median, sd, 95% interval, split-R̂ and bulk ESS per parameter.
    /// Diagnostics are omitted when there are too few chains or draws.
    pub fn summarize(&self) -> Vec<ParamSummary> {
        (0..self.dim())
            .map(|j| {
                let col = self.column(j);
                let sorted = stats::sorted(&col);
                let chains = self.chain_columns(j);
                ParamSummary {
                    name: self.param_names[j].clone(),
                    mean: stats::mean(&col),
                    median: stats::quantile_sorted(&sorted, 0.5),
                    sd: stats::variance(&col).sqrt(),
                    q2_5: stats::quantile_sorted(&sorted, 0.025),
                    q97_5: stats::quantile_sorted(&sorted, 0.975),
                    rhat: split_rhat_chains(&chains).ok().map(|r| r.value),
                    ess_bulk: ess_bulk_chains(&chains).ok(),
                }
            })
            .collect()
    }
}
