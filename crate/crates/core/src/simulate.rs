//! Synthetic event/exposure tables drawn from the APC model.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::data::{band_labels, ApcTable, MIN_LEVELS};
use crate::error::{ApcError, Result};
use crate::model::Constraints;
use crate::stats;

/// Built-in effect shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// All effects zero; births follow exp(λ0) times exposure.
    Zero,
    /// Fertility-like shapes with a dominant cohort effect: an inverted-U age
    /// curve peaking in the second age group, a mild rise-then-fall period
    /// curve, and a cohort curve that climbs slowly and then falls steeply.
    PrLike,
}

impl std::str::FromStr for Preset {
    type Err = ApcError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(Preset::Zero),
            "pr-like" => Ok(Preset::PrLike),
            other => Err(ApcError::validation(format!(
                "unknown preset `{other}` (expected zero or pr-like)"
            ))),
        }
    }
}

/// Log rate of a typical fertility schedule relative to its peak, seven
/// five-year groups from 15-19 to 45-49.
const AGE_TEMPLATE: [f64; 7] = [-1.1, 0.0, -0.22, -0.76, -1.6, -3.1, -5.7];

/// Complete set of true effect levels. φ and α have one entry per period
/// and cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueEffects {
    pub lambda0: f64,
    pub theta: Vec<f64>,
    pub phi: Vec<f64>,
    pub alpha: Vec<f64>,
}

fn check_dims(n_age: usize, n_period: usize) -> Result<()> {
    if n_age < MIN_LEVELS || n_period < MIN_LEVELS {
        return Err(ApcError::domain(format!(
            "simulated table must be at least {MIN_LEVELS}x{MIN_LEVELS}, got {n_age}x{n_period}"
        )));
    }
    Ok(())
}

fn interpolate(template: &[f64], u: f64) -> f64 {
    let last = template.len() - 1;
    let u = u.clamp(0.0, last as f64);
    let i = (u.floor() as usize).min(last - 1);
    let f = u - i as f64;
    template[i] * (1.0 - f) + template[i + 1] * f
}

impl TrueEffects {
    pub fn zeros(n_age: usize, n_period: usize, lambda0: f64) -> Result<Self> {
        check_dims(n_age, n_period)?;
        Ok(TrueEffects {
            lambda0,
            theta: vec![0.0; n_age],
            phi: vec![0.0; n_period],
            alpha: vec![0.0; n_age + n_period - 1],
        })
    }

    /// Preset shapes on an A × T grid with the preset's default intercept.
    pub fn preset(preset: Preset, n_age: usize, n_period: usize) -> Result<Self> {
        match preset {
            Preset::Zero => TrueEffects::zeros(n_age, n_period, (1e-3f64).ln()),
            Preset::PrLike => {
                check_dims(n_age, n_period)?;
                let n_cohort = n_age + n_period - 1;
                let frac = |i: usize, n: usize| i as f64 / (n - 1) as f64;
                let theta = (0..n_age)
                    .map(|a| interpolate(&AGE_TEMPLATE, 6.0 * frac(a, n_age)))
                    .collect();
                let phi = (0..n_period)
                    .map(|t| {
                        let s = frac(t, n_period);
                        0.15 * (std::f64::consts::PI * s).sin() - 0.1 * s
                    })
                    .collect();
                let alpha = (0..n_cohort)
                    .map(|c| {
                        let s = frac(c, n_cohort);
                        0.5 * s - 3.0 * (s - 0.45).max(0.0).powi(2)
                    })
                    .collect();
                Ok(TrueEffects {
                    lambda0: (0.15f64).ln(),
                    theta,
                    phi,
                    alpha,
                })
            }
        }
    }

    pub fn n_age(&self) -> usize {
        self.theta.len()
    }

    pub fn n_period(&self) -> usize {
        self.phi.len()
    }

    pub fn n_cohort(&self) -> usize {
        self.alpha.len()
    }

    fn validate(&self) -> Result<()> {
        check_dims(self.n_age(), self.n_period())?;
        if self.n_cohort() != self.n_age() + self.n_period() - 1 {
            return Err(ApcError::domain(format!(
                "{} cohort effects for a {}x{} table (expected {})",
                self.n_cohort(),
                self.n_age(),
                self.n_period(),
                self.n_age() + self.n_period() - 1
            )));
        }
        let all = std::iter::once(&self.lambda0).chain(&self.theta).chain(&self.phi).chain(&self.alpha);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(ApcError::domain("true effects must be finite"));
        }
        Ok(())
    }

    /// Linear predictor without offset at 1-based (a, t).
    pub fn eta(&self, a: usize, t: usize) -> f64 {
        let c = self.n_age() - a + t;
        self.lambda0 + self.theta[a - 1] + self.phi[t - 1] + self.alpha[c - 1]
    }

    /// The same linear predictor written in the model's anchored form:
    /// θ_1 = 0, φ_1 = 0 and α at the two anchored cohorts equal to 0.
    ///
    /// Level shifts move between each block and λ0. The remaining freedom
    /// is the linear trend (θ_a + k·a, φ_t − k·t, α_c + k·c, λ0 − k·A), which
    /// leaves every cell unchanged and is used to level the two anchors.
    pub fn canonical(&self, constraints: &Constraints) -> TrueEffects {
        let (n_age, n_cohort) = (self.n_age(), self.n_cohort());
        let anchor = constraints.anchor_for(n_cohort); // 1-based c*
        let k = self.alpha[anchor - 1] - self.alpha[anchor];
        let mut out = self.clone();
        for (i, v) in out.theta.iter_mut().enumerate() {
            *v += k * (i + 1) as f64;
        }
        for (i, v) in out.phi.iter_mut().enumerate() {
            *v -= k * (i + 1) as f64;
        }
        for (i, v) in out.alpha.iter_mut().enumerate() {
            *v += k * (i + 1) as f64;
        }
        out.lambda0 -= k * n_age as f64;

        let shift_theta = out.theta[0];
        let shift_phi = out.phi[0];
        let shift_alpha = out.alpha[anchor - 1];
        out.theta.iter_mut().for_each(|v| *v -= shift_theta);
        out.phi.iter_mut().for_each(|v| *v -= shift_phi);
        out.alpha.iter_mut().for_each(|v| *v -= shift_alpha);
        out.lambda0 += shift_theta + shift_phi + shift_alpha;
        // the two anchors are equal after the trend step, so both are now zero
        out.alpha[anchor] = 0.0;
        out
    }

    /// Each block minus its mean, as reported for posterior effects.
    pub fn centered(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let center = |v: &[f64]| {
            let m = stats::mean(v);
            v.iter().map(|x| x - m).collect::<Vec<f64>>()
        };
        (center(&self.theta), center(&self.phi), center(&self.alpha))
    }

    /// Writes `block,level,value,centered`; the intercept row has block
    /// `intercept` and level 1.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let (ct, cp, ca) = self.centered();
        let mut out = String::from("block,level,value,centered\n");
        out.push_str(&format!("intercept,1,{:?},{:?}\n", self.lambda0, self.lambda0));
        for (name, raw, cen) in [("age", &self.theta, &ct), ("period", &self.phi, &cp), ("cohort", &self.alpha, &ca)] {
            for (i, (v, c)) in raw.iter().zip(cen).enumerate() {
                out.push_str(&format!("{name},{},{v:?},{c:?}\n", i + 1));
            }
        }
        std::fs::write(path, out).map_err(|e| ApcError::io(path, e))
    }

    /// Reads a file with at least `block,level,value` columns. Blocks are
    /// `intercept`, `age`, `period` and `cohort`; levels are 1-based and must
    /// be complete.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let format_err = |message: String| ApcError::Format {
            path: path.to_path_buf(),
            message,
        };
        let mut reader = csv::Reader::from_path(path).map_err(|e| format_err(e.to_string()))?;
        let headers = reader.headers().map_err(|e| format_err(e.to_string()))?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| format_err(format!("missing column `{name}`")))
        };
        let (ib, il, iv) = (col("block")?, col("level")?, col("value")?);
        let mut lambda0 = None;
        let mut blocks: [Vec<(usize, f64)>; 3] = Default::default();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| format_err(e.to_string()))?;
            let row = line + 2;
            let level: usize = record[il]
                .trim()
                .parse()
                .map_err(|_| format_err(format!("row {row}: bad level `{}`", &record[il])))?;
            let value: f64 = record[iv]
                .trim()
                .parse()
                .map_err(|_| format_err(format!("row {row}: bad value `{}`", &record[iv])))?;
            match record[ib].trim() {
                "intercept" => lambda0 = Some(value),
                "age" => blocks[0].push((level, value)),
                "period" => blocks[1].push((level, value)),
                "cohort" => blocks[2].push((level, value)),
                other => return Err(format_err(format!("row {row}: unknown block `{other}`"))),
            }
        }
        let mut levels = Vec::new();
        for (name, mut entries) in ["age", "period", "cohort"].into_iter().zip(blocks) {
            entries.sort_by_key(|e| e.0);
            if entries.iter().enumerate().any(|(i, e)| e.0 != i + 1) {
                return Err(format_err(format!("{name} levels must be 1..n without gaps or repeats")));
            }
            levels.push(entries.into_iter().map(|e| e.1).collect::<Vec<f64>>());
        }
        let alpha = levels.pop().unwrap();
        let phi = levels.pop().unwrap();
        let theta = levels.pop().unwrap();
        let truth = TrueEffects {
            lambda0: lambda0.ok_or_else(|| format_err("missing intercept row".into()))?,
            theta,
            phi,
            alpha,
        };
        truth.validate()?;
        Ok(truth)
    }
}

/// Layout and exposure of a simulated table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationDesign {
    /// Person-years in every cell.
    pub exposure: f64,
    pub first_age: i64,
    pub first_period: i64,
    pub band_width: u32,
}

impl Default for SimulationDesign {
    fn default() -> Self {
        SimulationDesign {
            exposure: 1e5,
            first_age: 15,
            first_period: 1950,
            band_width: 5,
        }
    }
}

/// Births ~ Poisson(exposure · exp(η)) independently per cell, drawn in
/// row-major order from a generator seeded with `seed`.
pub fn simulate_table(truth: &TrueEffects, design: &SimulationDesign, seed: u64) -> Result<ApcTable> {
    truth.validate()?;
    if !(design.exposure.is_finite() && design.exposure > 0.0) {
        return Err(ApcError::domain(format!("exposure must be positive, got {}", design.exposure)));
    }
    if design.band_width == 0 {
        return Err(ApcError::domain("band width must be positive"));
    }
    let (n_age, n_period) = (truth.n_age(), truth.n_period());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut births = Vec::with_capacity(n_age * n_period);
    for a in 1..=n_age {
        for t in 1..=n_period {
            let mu = design.exposure * truth.eta(a, t).exp();
            if !mu.is_finite() {
                return Err(ApcError::domain(format!("expected births in cell ({a}, {t}) overflow")));
            }
            let y = if mu > 0.0 {
                Poisson::new(mu)
                    .map_err(|e| ApcError::domain(format!("cell ({a}, {t}): {e}")))?
                    .sample(&mut rng) as u64
            } else {
                0
            };
            births.push(y);
        }
    }
    let w = design.band_width as i64;
    ApcTable::new(
        band_labels(design.first_age, w, n_age),
        band_labels(design.first_period, w, n_period),
        births,
        vec![design.exposure; n_age * n_period],
        design.band_width,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::asfr;
    use proptest::prelude::*;

    #[test]
    fn zero_effects_recover_rate() {
        let truth = TrueEffects::zeros(4, 5, (1e-3f64).ln()).unwrap();
        let design = SimulationDesign {
            exposure: 1e6,
            ..Default::default()
        };
        let table = simulate_table(&truth, &design, 3).unwrap();
        let rates = asfr(&table);
        let n = rates.as_slice().len() as f64;
        let mean = rates.as_slice().iter().sum::<f64>() / n;
        // Poisson sd of the pooled rate
        let sd = (1e-3 / (1e6 * n)).sqrt();
        assert!((mean - 1e-3).abs() < 3.0 * sd, "{mean}");
    }

    #[test]
    fn same_seed_same_table() {
        let truth = TrueEffects::preset(Preset::PrLike, 7, 15).unwrap();
        let d = SimulationDesign::default();
        assert_eq!(simulate_table(&truth, &d, 9).unwrap(), simulate_table(&truth, &d, 9).unwrap());
        assert_ne!(simulate_table(&truth, &d, 9).unwrap(), simulate_table(&truth, &d, 10).unwrap());
    }

    #[test]
    fn pr_like_peaks_in_second_age_group() {
        let truth = TrueEffects::preset(Preset::PrLike, 7, 15).unwrap();
        let max = truth.theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(truth.theta[1], max);
        assert!(truth.theta.iter().enumerate().all(|(i, v)| i == 1 || *v < max));
        // late cohorts fall below early ones
        assert!(truth.alpha[20] < truth.alpha[0]);
    }

    #[test]
    fn invalid_inputs() {
        assert!(TrueEffects::zeros(2, 5, 0.0).is_err());
        let truth = TrueEffects::zeros(3, 3, 0.0).unwrap();
        let bad = SimulationDesign {
            exposure: 0.0,
            ..Default::default()
        };
        assert!(simulate_table(&truth, &bad, 1).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("truth.csv");
        let truth = TrueEffects::preset(Preset::PrLike, 4, 6).unwrap();
        truth.write_csv(&p).unwrap();
        assert_eq!(TrueEffects::read_csv(&p).unwrap(), truth);
    }

    #[test]
    fn canonical_form_is_anchored() {
        let truth = TrueEffects::preset(Preset::PrLike, 7, 15).unwrap();
        let c = truth.canonical(&Constraints::default());
        assert_eq!(c.theta[0], 0.0);
        assert_eq!(c.phi[0], 0.0);
        assert!(c.alpha[9].abs() < 1e-12 && c.alpha[10].abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn canonical_form_keeps_every_cell(
            seed in 0u64..1000,
            n_age in 3usize..8,
            n_period in 3usize..10,
        ) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut truth = TrueEffects::zeros(n_age, n_period, rng.random_range(-3.0..0.0)).unwrap();
            for v in truth.theta.iter_mut().chain(truth.phi.iter_mut()).chain(truth.alpha.iter_mut()) {
                *v = rng.random_range(-1.0..1.0);
            }
            let c = truth.canonical(&Constraints::default());
            for a in 1..=n_age {
                for t in 1..=n_period {
                    prop_assert!((c.eta(a, t) - truth.eta(a, t)).abs() < 1e-10);
                }
            }
            let anchor = Constraints::default().anchor_for(truth.n_cohort());
            prop_assert!(c.alpha[anchor - 1].abs() < 1e-12);
            prop_assert!(c.alpha[anchor].abs() < 1e-12);
        }
    }
}
