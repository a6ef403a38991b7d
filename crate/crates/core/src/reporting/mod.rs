//! Posterior effect summaries and SVG figures.

mod svg;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use svg::{
    effects_overlay_svg, effects_svg, hexamap_svg, render_effects_overlay_svg, render_effects_svg,
    render_hexamap_svg, render_tfr_svg, tfr_svg, RAMP_HIGH, RAMP_LOW,
};

use crate::data::ApcTable;
use crate::error::{ApcError, Result};
use crate::model::{Block, ModelSpec, ParamLayout};
use crate::sampler::PosteriorDraws;
use crate::stats;

/// Per-level posterior summary of one effect block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSummary {
    pub block: Block,
    pub level_labels: Vec<String>,
    pub mean: Vec<f64>,
    pub median: Vec<f64>,
    pub q2_5: Vec<f64>,
    pub q97_5: Vec<f64>,
}

impl EffectSummary {
    pub fn levels(&self) -> usize {
        self.level_labels.len()
    }
}

fn labels_for(block: Block, table: &ApcTable) -> Vec<String> {
    match block {
        Block::Age => table.age_labels().to_vec(),
        Block::Period => table.period_labels().to_vec(),
        Block::Cohort => table.cohort_labels(),
    }
}

/// Summaries for every block the model estimates. Each draw's effects are
/// centered to mean zero first when `spec.center_for_report` is set.
pub fn summarize_effects(draws: &PosteriorDraws, spec: &ModelSpec, table: &ApcTable) -> Result<Vec<EffectSummary>> {
    if draws.n_draws() == 0 {
        return Err(ApcError::domain("no draws to summarize"));
    }
    let layout = ParamLayout::for_table(spec, table);
    if draws.dim() != layout.dim {
        return Err(ApcError::domain(format!(
            "draws have {} parameters, the {} model on this table has {}",
            draws.dim(),
            spec.family,
            layout.dim
        )));
    }
    let mut out = Vec::new();
    for block in layout.blocks() {
        let levels = layout.levels(block);
        let mut per_level: Vec<Vec<f64>> = vec![Vec::with_capacity(draws.n_draws()); levels];
        for row in draws.rows() {
            let mut eff = layout.effect_levels(row, block).expect("active block");
            if spec.center_for_report {
                let m = stats::mean(&eff);
                eff.iter_mut().for_each(|e| *e -= m);
            }
            for (col, e) in per_level.iter_mut().zip(eff) {
                col.push(e);
            }
        }
        let mut s = EffectSummary {
            block,
            level_labels: labels_for(block, table),
            mean: Vec::with_capacity(levels),
            median: Vec::with_capacity(levels),
            q2_5: Vec::with_capacity(levels),
            q97_5: Vec::with_capacity(levels),
        };
        for col in &per_level {
            let sorted = stats::sorted(col);
            s.mean.push(stats::mean(col));
            s.median.push(stats::quantile_sorted(&sorted, 0.5));
            s.q2_5.push(stats::quantile_sorted(&sorted, 0.025));
            s.q97_5.push(stats::quantile_sorted(&sorted, 0.975));
        }
        out.push(s);
    }
    Ok(out)
}

/// CSV with columns `block,level,mean,median,q2.5,q97.5`.
pub fn effects_csv(summaries: &[EffectSummary]) -> String {
    let mut out = String::from("block,level,mean,median,q2.5,q97.5\n");
    for s in summaries {
        for i in 0..s.levels() {
            out.push_str(&format!(
                "{},{},{:?},{:?},{:?},{:?}\n",
                s.block.name(),
                s.level_labels[i],
                s.mean[i],
                s.median[i],
                s.q2_5[i],
                s.q97_5[i]
            ));
        }
    }
    out
}

pub fn write_effects_csv(summaries: &[EffectSummary], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, effects_csv(summaries)).map_err(|e| ApcError::io(path, e))
}
