//! Plain-text run configuration: one `dotted.key = value` per line, `#`
//! starts a comment. Command-line flags are applied on top of the file.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use apc_core::model::Constraints;
use apc_core::{Family, MetricKind, ModelSpec, OffsetMode, PrecisionPrior, SamplerConfig, TableFormat};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const KNOWN_KEYS: &[&str] = &[
    "input",
    "format",
    "out",
    "seed",
    "families",
    "prior",
    "prior.p",
    "prior.q",
    "prior.b",
    "prior.shape",
    "prior.rate",
    "model.offset_mode",
    "model.center_for_report",
    "model.cohort_anchor",
    "sampler.chains",
    "sampler.warmup_iters",
    "sampler.sampling_iters",
    "sampler.target_accept",
    "sampler.max_tree_depth",
    "sampler.metric",
    "simulate.preset",
    "simulate.truth",
    "simulate.ages",
    "simulate.periods",
    "simulate.exposure",
    "simulate.first_age",
    "simulate.first_period",
    "simulate.band_width",
];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn parse(text: &str, origin: &str) -> CliResult<Self> {
        let mut settings = Settings::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::validation(format!("{origin}:{}: expected `key = value`, found `{line}`", i + 1))
            })?;
            settings
                .set(key.trim(), value.trim())
                .map_err(|e| CliError::validation(format!("{origin}:{}: {e}", i + 1)))?;
        }
        Ok(settings)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(CliError::validation(format!("unknown setting `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// `key=value` as given to `--set`.
    pub fn set_pair(&mut self, pair: &str) -> CliResult<()> {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| CliError::validation(format!("--set expects key=value, got `{pair}`")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set_opt(&mut self, key: &str, value: Option<impl ToString>) -> CliResult<()> {
        match value {
            Some(v) => self.set(key, &v.to_string()),
            None => Ok(()),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn value<T>(&self, key: &str) -> CliResult<Option<T>>
    where
        T: FromStr,
        T::Err: Display,
    {
        self.get(key)
            .map(|raw| {
                raw.parse::<T>()
                    .map_err(|e| CliError::validation(format!("invalid value `{raw}` for `{key}`: {e}")))
            })
            .transpose()
    }

    pub fn entries(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn require_seed(&self) -> CliResult<u64> {
        self.value("seed")?
            .ok_or_else(|| CliError::validation("a seed is required: pass --seed or set `seed` in the config"))
    }

    pub fn require_path(&self, key: &str, flag: &str) -> CliResult<PathBuf> {
        self.get(key)
            .map(PathBuf::from)
            .ok_or_else(|| CliError::validation(format!("missing {flag} (or `{key}` in the config)")))
    }

    pub fn format(&self) -> CliResult<TableFormat> {
        Ok(self.value("format")?.unwrap_or(TableFormat::LongCsv))
    }
}

pub fn parse_families(raw: &str) -> CliResult<Vec<Family>> {
    let mut out = Vec::new();
    for part in raw.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let family: Family = part.parse().map_err(|e| CliError::validation(format!("{e}")))?;
        if out.contains(&family) {
            return Err(CliError::validation(format!("family {family} listed twice")));
        }
        out.push(family);
    }
    if out.is_empty() {
        return Err(CliError::validation("at least one model family is required"));
    }
    Ok(out)
}

fn parse_prior(settings: &Settings) -> CliResult<PrecisionPrior> {
    let kind = settings.get("prior").unwrap_or("sbeta2").to_ascii_lowercase();
    let (prior, own, foreign): (PrecisionPrior, &[&str], &[&str]) = match kind.as_str() {
        "sbeta2" | "sb2" => {
            let PrecisionPrior::ScaledBeta2 { p, q, b } = PrecisionPrior::default() else {
                unreachable!()
            };
            (
                PrecisionPrior::ScaledBeta2 {
                    p: settings.value("prior.p")?.unwrap_or(p),
                    q: settings.value("prior.q")?.unwrap_or(q),
                    b: settings.value("prior.b")?.unwrap_or(b),
                },
                &["prior.p", "prior.q", "prior.b"],
                &["prior.shape", "prior.rate"],
            )
        }
        "gamma" => {
            let PrecisionPrior::Gamma { shape, rate } = PrecisionPrior::gamma_default() else {
                unreachable!()
            };
            (
                PrecisionPrior::Gamma {
                    shape: settings.value("prior.shape")?.unwrap_or(shape),
                    rate: settings.value("prior.rate")?.unwrap_or(rate),
                },
                &["prior.shape", "prior.rate"],
                &["prior.p", "prior.q", "prior.b"],
            )
        }
        other => return Err(CliError::validation(format!("unknown prior `{other}` (expected sbeta2 or gamma)"))),
    };
    if let Some(key) = foreign.iter().find(|k| settings.get(k).is_some()) {
        return Err(CliError::validation(format!(
            "`{key}` does not apply to the {kind} prior (its keys are {})",
            own.join(", ")
        )));
    }
    prior.validate()?;
    Ok(prior)
}

/// Everything `fit` needs, resolved from settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub input: PathBuf,
    pub format: TableFormat,
    pub out: PathBuf,
    pub seed: u64,
    pub families: Vec<Family>,
    pub prior: PrecisionPrior,
    pub offset_mode: OffsetMode,
    pub center_for_report: bool,
    pub cohort_anchor: usize,
    pub sampler: SamplerConfig,
}

impl FitConfig {
    pub fn from_settings(settings: &Settings) -> CliResult<Self> {
        let seed = settings.require_seed()?;
        let families = match settings.get("families") {
            Some(raw) => parse_families(raw)?,
            None => Family::ALL.to_vec(),
        };
        let defaults = SamplerConfig::default();
        let sampler = SamplerConfig {
            chains: settings.value("sampler.chains")?.unwrap_or(defaults.chains),
            warmup_iters: settings.value("sampler.warmup_iters")?.unwrap_or(defaults.warmup_iters),
            sampling_iters: settings.value("sampler.sampling_iters")?.unwrap_or(defaults.sampling_iters),
            target_accept: settings.value("sampler.target_accept")?.unwrap_or(defaults.target_accept),
            max_tree_depth: settings.value("sampler.max_tree_depth")?.unwrap_or(defaults.max_tree_depth),
            metric: settings.value::<MetricKind>("sampler.metric")?.unwrap_or_default(),
            base_seed: seed,
        };
        sampler.validate()?;
        let config = FitConfig {
            input: settings.require_path("input", "--input")?,
            format: settings.format()?,
            out: settings.require_path("out", "--out")?,
            seed,
            families,
            prior: parse_prior(settings)?,
            offset_mode: settings.value("model.offset_mode")?.unwrap_or_default(),
            center_for_report: settings.value("model.center_for_report")?.unwrap_or(true),
            cohort_anchor: settings
                .value("model.cohort_anchor")?
                .unwrap_or(Constraints::default().cohort_anchor),
            sampler,
        };
        config.spec(Family::Apc).validate()?;
        Ok(config)
    }

    pub fn spec(&self, family: Family) -> ModelSpec {
        let mut spec = ModelSpec::new(family)
            .with_prior(self.prior)
            .with_offset_mode(self.offset_mode);
        spec.center_for_report = self.center_for_report;
        spec.constraints.cohort_anchor = self.cohort_anchor;
        spec
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_dotted_keys_and_comments() {
        let s = Settings::parse("# run\nsampler.chains = 2  # fewer\nseed=7\n\nprior = gamma\n", "cfg").unwrap();
        assert_eq!(s.get("sampler.chains"), Some("2"));
        assert_eq!(s.value::<u64>("seed").unwrap(), Some(7));
        assert_eq!(s.get("prior"), Some("gamma"));
    }

    #[test]
    fn unknown_key_names_line() {
        let err = Settings::parse("seed = 1\nsampler.chain = 2\n", "run.cfg").unwrap_err();
        assert!(err.message.contains("run.cfg:2") && err.message.contains("sampler.chain"), "{err}");
    }

    #[test]
    fn missing_equals_is_error() {
        assert!(Settings::parse("seed 1", "cfg").is_err());
    }

    #[test]
    fn flags_override_file_values() {
        let mut s = Settings::parse("seed = 1\ninput = a.csv\nout = o\n", "cfg").unwrap();
        s.set_pair("seed=9").unwrap();
        let c = FitConfig::from_settings(&s).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.sampler.base_seed, 9);
    }

    #[test]
    fn seed_is_required() {
        let s = Settings::parse("input = a.csv\nout = o\n", "cfg").unwrap();
        let err = FitConfig::from_settings(&s).unwrap_err();
        assert!(err.message.contains("seed"));
    }

    #[test]
    fn prior_keys_must_match_kind() {
        let s = Settings::parse("seed = 1\ninput = a\nout = o\nprior = gamma\nprior.b = 3\n", "cfg").unwrap();
        assert!(FitConfig::from_settings(&s).is_err());
        let s = Settings::parse("seed = 1\ninput = a\nout = o\nprior = gamma\nprior.rate = 0.01\n", "cfg").unwrap();
        let c = FitConfig::from_settings(&s).unwrap();
        assert_eq!(c.prior, PrecisionPrior::Gamma { shape: 0.001, rate: 0.01 });
    }

    #[test]
    fn family_lists() {
        assert_eq!(parse_families("APC, ap").unwrap(), vec![Family::Apc, Family::Ap]);
        assert!(parse_families("APC,APC").is_err());
        assert!(parse_families(" , ").is_err());
        assert!(parse_families("APCX").is_err());
    }
}
