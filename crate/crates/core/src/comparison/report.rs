use std::fmt::Write as _;

use serde::{Serialize, Serializer};

use super::criteria::{area_share, effect_area, fitted_rates, rss, rss_shares, RssShares};
use super::{pointwise_loglik, psis_loo, waic, PARETO_K_WARN};
use crate::data::{asfr, ApcTable};
use crate::error::Result;
use crate::model::{Block, Family, ModelSpec, ParamLayout};
use crate::sampler::PosteriorDraws;

/// Draws of one fitted model together with the spec that produced them.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub draws: PosteriorDraws,
}

/// JSON has no infinities; k = ±inf is written as a string.
fn serialize_k<S: Serializer>(ks: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(ks.len()))?;
    for k in ks {
        if k.is_finite() {
            seq.serialize_element(k)?;
        } else if *k > 0.0 {
            seq.serialize_element("inf")?;
        } else {
            seq.serialize_element("-inf")?;
        }
    }
    seq.end()
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelCriteria {
    pub label: String,
    pub family: Family,
    pub prior: String,
    pub looic: f64,
    pub looic_se: f64,
    pub elpd_loo: f64,
    pub p_loo: f64,
    pub waic: f64,
    pub waic_se: f64,
    pub p_waic: f64,
    #[serde(serialize_with = "serialize_k")]
    pub pareto_k: Vec<f64>,
    /// 1-based cells with k above the warning threshold.
    pub high_k_cells: Vec<usize>,
    pub rss: f64,
    /// Centered posterior-mean period and cohort effects, when estimated.
    pub period_effect: Option<Vec<f64>>,
    pub cohort_effect: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct EffectAreas {
    pub area_p_apc: Option<f64>,
    pub area_p_ap: Option<f64>,
    pub area_c_apc: Option<f64>,
    pub area_c_ac: Option<f64>,
    pub p_eff: Option<f64>,
    pub c_eff: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportMetadata {
    pub fitted_values: &'static str,
    pub area_rule: &'static str,
    pub pareto_k_threshold: f64,
    pub family_choice: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub models: Vec<ModelCriteria>,
    pub shares: Option<RssShares>,
    pub areas: EffectAreas,
    /// Criteria left out because a required family was not fitted.
    pub omitted: Vec<String>,
    pub warnings: Vec<String>,
    pub metadata: ReportMetadata,
}

fn centered_mean_effect(draws: &PosteriorDraws, layout: &ParamLayout, block: Block) -> Option<Vec<f64>> {
    let levels = layout.levels(block);
    let mut sum = vec![0.0; levels];
    for row in draws.rows() {
        let eff = layout.effect_levels(row, block)?;
        for (s, e) in sum.iter_mut().zip(eff) {
            *s += e;
        }
    }
    let n = draws.n_draws() as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let center = mean.iter().sum::<f64>() / levels as f64;
    Some(mean.iter().map(|m| m - center).collect())
}

fn model_criteria(fit: &FittedModel, table: &ApcTable) -> Result<ModelCriteria> {
    let ll = pointwise_loglik(&fit.draws, table, &fit.spec)?;
    let w = waic(&ll)?;
    let l = psis_loo(&ll)?;
    let layout = ParamLayout::for_table(&fit.spec, table);
    Ok(ModelCriteria {
        label: fit.spec.label(),
        family: fit.spec.family,
        prior: fit.spec.precision_prior.to_string(),
        looic: l.looic,
        looic_se: l.se,
        elpd_loo: l.elpd_loo,
        p_loo: l.p_loo,
        waic: w.waic,
        waic_se: w.se,
        p_waic: w.p_waic,
        high_k_cells: l.high_k_cells().into_iter().map(|i| i + 1).collect(),
        pareto_k: l.pareto_k,
        rss: rss(&fitted_rates(&fit.draws, table, &fit.spec)?, &asfr(table))?,
        period_effect: centered_mean_effect(&fit.draws, &layout, Block::Period),
        cohort_effect: centered_mean_effect(&fit.draws, &layout, Block::Cohort),
    })
}

impl ComparisonReport {
    /// Criteria for every fitted model; shares and effect areas wherever the
    /// families they depend on are present. For shares and areas the first
    /// model of each family is used.
    pub fn build(fits: &[FittedModel], table: &ApcTable) -> Result<Self> {
        let models: Vec<ModelCriteria> = fits.iter().map(|f| model_criteria(f, table)).collect::<Result<_>>()?;
        let first = |family: Family| models.iter().find(|m| m.family == family);
        let (apc, ap, ac, a) = (first(Family::Apc), first(Family::Ap), first(Family::Ac), first(Family::A));
        let mut omitted = Vec::new();
        let mut warnings = Vec::new();

        let shares = match (apc, ap, ac, a) {
            (Some(apc), Some(ap), Some(ac), Some(a)) => Some(rss_shares(apc.rss, ap.rss, ac.rss, a.rss)?),
            _ => {
                let missing: Vec<&str> = Family::ALL
                    .iter()
                    .filter(|f| first(**f).is_none())
                    .map(|f| f.name())
                    .collect();
                omitted.push(format!("RSS shares need all four families; missing {}", missing.join(", ")));
                None
            }
        };
        if let Some(s) = &shares {
            warnings.extend(s.warnings.iter().cloned());
        }

        let mut areas = EffectAreas::default();
        match (apc, ap) {
            (Some(apc), Some(ap)) => {
                let (full, reduced) = (apc.period_effect.as_deref().unwrap(), ap.period_effect.as_deref().unwrap());
                areas.area_p_apc = Some(effect_area(full)?);
                areas.area_p_ap = Some(effect_area(reduced)?);
                areas.p_eff = Some(area_share(full, reduced)?);
            }
            _ => omitted.push(format!("P_eff needs APC and AP; missing {}", missing_of(apc, ap, "APC", "AP"))),
        }
        match (apc, ac) {
            (Some(apc), Some(ac)) => {
                let (full, reduced) = (apc.cohort_effect.as_deref().unwrap(), ac.cohort_effect.as_deref().unwrap());
                areas.area_c_apc = Some(effect_area(full)?);
                areas.area_c_ac = Some(effect_area(reduced)?);
                areas.c_eff = Some(area_share(full, reduced)?);
            }
            _ => omitted.push(format!("C_eff needs APC and AC; missing {}", missing_of(apc, ac, "APC", "AC"))),
        }

        for m in &models {
            if !m.high_k_cells.is_empty() {
                warnings.push(format!(
                    "{}: {} cell(s) with Pareto k > {PARETO_K_WARN}; LOOIC may be unreliable",
                    m.label,
                    m.high_k_cells.len()
                ));
            }
        }

        Ok(ComparisonReport {
            models,
            shares,
            areas,
            omitted,
            warnings,
            metadata: ReportMetadata {
                fitted_values: "posterior mean of exp(linear predictor without offset)",
                area_rule: "trapezoid area of |centered posterior-mean effect| on a unit grid, split at zero crossings",
                pareto_k_threshold: PARETO_K_WARN,
                family_choice: "shares and areas use the first fitted model of each family",
            },
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plain-text tables: residual shares and effect areas, then information
    /// criteria by model.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut rows: Vec<(String, String)> = Vec::new();
        if let Some(s) = &self.shares {
            for (name, v) in [
                ("C_APC", s.c_apc),
                ("P_APC", s.p_apc),
                ("PC_APC", s.pc_apc),
                ("P_AP", s.p_ap),
                ("C_AC", s.c_ac),
            ] {
                rows.push((name.to_string(), format!("{v:.4}")));
            }
        }
        for (name, v) in [("P_eff", self.areas.p_eff), ("C_eff", self.areas.c_eff)] {
            if let Some(v) = v {
                rows.push((name.to_string(), format!("{v:.4}")));
            }
        }
        out.push_str("Amount explained in model by period and cohort effects\n");
        push_table(&mut out, &["Formula", "Value"], &rows.iter().map(|(a, b)| vec![a.clone(), b.clone()]).collect::<Vec<_>>());
        for o in &self.omitted {
            let _ = writeln!(out, "  (omitted) {o}");
        }
        out.push('\n');

        out.push_str("LOOIC and WAIC values for different models\n");
        let rows: Vec<Vec<String>> = self
            .models
            .iter()
            .map(|m| {
                vec![
                    m.label.clone(),
                    thousands(m.looic),
                    thousands(m.looic_se),
                    thousands(m.waic),
                    thousands(m.waic_se),
                ]
            })
            .collect();
        push_table(&mut out, &["Model", "LOOIC", "Standard Error", "WAIC", "Standard Error"], &rows);
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}

fn missing_of<T>(a: Option<T>, b: Option<T>, na: &str, nb: &str) -> String {
    let v: Vec<&str> = [(a.is_none(), na), (b.is_none(), nb)]
        .into_iter()
        .filter(|(m, _)| *m)
        .map(|(_, n)| n)
        .collect();
    v.join(", ")
}

fn push_table(out: &mut String, header: &[&str], rows: &[Vec<String>]) {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| -> String {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i > 0 {
                s.push_str("  ");
            }
            if i == 0 {
                let _ = write!(s, "{c:<w$}");
            } else {
                let _ = write!(s, "{c:>w$}");
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let rule = "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)) + "\n";
    out.push_str(&rule);
    out.push_str(&line(header.to_vec()));
    out.push_str(&rule);
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out.push_str(&rule);
}

/// One decimal with comma thousands separators, e.g. 41,732.3.
pub(crate) fn thousands(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let s = format!("{:.1}", x.abs());
    let (int, frac) = s.split_once('.').unwrap();
    let mut grouped = String::new();
    for (i, ch) in int.chars().enumerate() {
        if i > 0 && (int.len() - i) % 3 == 0 {
            grouped.push(',');
        }
        grouped.push(ch);
    }
    let sign = if x < 0.0 && s != "0.0" { "-" } else { "" };
    format!("{sign}{grouped}.{frac}")
}
