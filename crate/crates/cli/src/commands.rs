use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use apc_core::comparison::FittedModel;
use apc_core::data::write_long_csv;
use apc_core::model::Block;
use apc_core::reporting::{effects_csv, effects_overlay_svg, effects_svg, hexamap_svg, summarize_effects, tfr_svg};
use apc_core::sampler::{ChainStats, ParamSummary};
use apc_core::simulate::{simulate_table, Preset, SimulationDesign, TrueEffects};
use apc_core::{load_table, sample, ApcTable, ComparisonReport, Family, ModelSpec, PosteriorDraws, SamplerConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{parse_families, FitConfig, Settings};
use crate::error::{CliError, CliResult};

/// R̂ above this is reported as a warning in summary.json.
const RHAT_WARN: f64 = 1.01;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn create_dir(path: &Path) -> CliResult<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn read_file(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

fn family_dir(family: Family) -> String {
    family.name().to_ascii_lowercase()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

/// Record of a `fit` run. Holds no output location or timestamps, so
/// identical inputs give identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub families: Vec<Family>,
    pub format: apc_core::TableFormat,
    pub spec: BTreeMap<String, ModelSpec>,
    pub sampler: SamplerConfig,
    /// Resolved settings, without `out`.
    pub settings: BTreeMap<String, String>,
    pub input: FileHash,
    pub outputs: Vec<FileHash>,
}

/// Contents of `summary.json` for one fitted family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub family: Family,
    pub label: String,
    pub spec: ModelSpec,
    pub sampler: SamplerConfig,
    pub n_age: usize,
    pub n_period: usize,
    pub n_cohort: usize,
    pub draws: usize,
    pub max_rhat: Option<f64>,
    pub min_ess_bulk: Option<f64>,
    pub divergences: usize,
    pub warmup_divergences: usize,
    pub chains: Vec<ChainStats>,
    pub parameters: Vec<ParamSummary>,
    pub warnings: Vec<String>,
}

impl FitSummary {
    pub fn new(spec: &ModelSpec, sampler: &SamplerConfig, table: &ApcTable, draws: &PosteriorDraws) -> Self {
        let parameters = draws.summarize();
        let max_rhat = parameters.iter().filter_map(|p| p.rhat).reduce(f64::max);
        let min_ess_bulk = parameters.iter().filter_map(|p| p.ess_bulk).reduce(f64::min);
        let divergences = draws.divergences();
        let mut warnings = Vec::new();
        if let Some(r) = max_rhat.filter(|r| *r > RHAT_WARN) {
            warnings.push(format!("max split R-hat {r:.4} exceeds {RHAT_WARN}"));
        }
        if divergences > 0 {
            warnings.push(format!("{divergences} divergent transitions after warmup"));
        }
        let depth_hits: usize = draws.chain_stats().iter().map(|c| c.max_depth_hits).sum();
        if depth_hits > 0 {
            warnings.push(format!("{depth_hits} transitions hit the maximum tree depth"));
        }
        FitSummary {
            family: spec.family,
            label: spec.label(),
            spec: spec.clone(),
            sampler: sampler.clone(),
            n_age: table.n_age(),
            n_period: table.n_period(),
            n_cohort: table.n_cohort(),
            draws: draws.n_draws(),
            max_rhat,
            min_ess_bulk,
            divergences,
            warmup_divergences: draws.chain_stats().iter().map(|c| c.warmup_divergences).sum(),
            chains: draws.chain_stats().to_vec(),
            parameters,
            warnings,
        }
    }
}

fn to_json_bytes(value: &impl Serialize) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

pub fn fit(config: &FitConfig, settings: &Settings) -> CliResult<()> {
    let input_bytes = read_file(&config.input)?;
    let table = load_table(&config.input, config.format)?;
    create_dir(&config.out)?;
    let mut outputs = Vec::new();
    let mut specs = BTreeMap::new();
    for &family in &config.families {
        let spec = config.spec(family);
        let draws = sample(&spec, &table, &config.sampler)?;
        let summary = FitSummary::new(&spec, &config.sampler, &table, &draws);
        let effects = summarize_effects(&draws, &spec, &table)?;
        let name = family_dir(family);
        let dir = config.out.join(&name);
        create_dir(&dir)?;
        let files: [(&str, Vec<u8>); 4] = [
            ("draws.csv", draws.to_csv_string().into_bytes()),
            ("summary.json", to_json_bytes(&summary)),
            ("effects.csv", effects_csv(&effects).into_bytes()),
            ("effects.svg", effects_svg(&effects)?.into_bytes()),
        ];
        for (file, bytes) in files {
            write_file(&dir.join(file), &bytes)?;
            outputs.push(FileHash {
                path: format!("{name}/{file}"),
                sha256: sha256_hex(&bytes),
            });
        }
        println!(
            "{}: max R-hat {}, min bulk ESS {}, {} divergences -> {}",
            summary.label,
            summary.max_rhat.map_or("n/a".into(), |r| format!("{r:.4}")),
            summary.min_ess_bulk.map_or("n/a".into(), |e| format!("{e:.0}")),
            summary.divergences,
            dir.display()
        );
        specs.insert(name, spec);
    }
    let mut resolved = settings.entries().clone();
    resolved.remove("out");
    let manifest = Manifest {
        tool: "bapc".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: "fit".into(),
        seed: config.seed,
        families: config.families.clone(),
        format: config.format,
        spec: specs,
        sampler: config.sampler.clone(),
        settings: resolved,
        input: FileHash {
            path: config.input.display().to_string(),
            sha256: sha256_hex(&input_bytes),
        },
        outputs,
    };
    write_file(&config.out.join("manifest.json"), &to_json_bytes(&manifest))
}

/// One fitted family loaded back from disk.
struct LoadedFit {
    dir: PathBuf,
    summary: FitSummary,
}

/// Family directories under `path`: the path itself if it holds a
/// summary.json, otherwise its immediate subdirectories that do.
fn fit_dirs(path: &Path) -> CliResult<Vec<PathBuf>> {
    if path.join("summary.json").is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = std::fs::read_dir(path).map_err(|e| CliError::io(path, e))?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("summary.json").is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(CliError::validation(format!("no fitted model found in {}", path.display())));
    }
    Ok(dirs)
}

fn load_fits(runs: &[PathBuf]) -> CliResult<Vec<LoadedFit>> {
    let mut fits = Vec::new();
    for run in runs {
        for dir in fit_dirs(run)? {
            let path = dir.join("summary.json");
            let summary: FitSummary = serde_json::from_slice(&read_file(&path)?)
                .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
            fits.push(LoadedFit { dir, summary });
        }
    }
    // stable, so runs of one family keep their command-line order
    fits.sort_by_key(|f| Family::ALL.iter().position(|x| *x == f.summary.family));
    Ok(fits)
}

fn manifest_near(dir: &Path) -> Option<(PathBuf, Manifest)> {
    [Some(dir), dir.parent()].into_iter().flatten().find_map(|d| {
        let path = d.join("manifest.json");
        let bytes = std::fs::read(&path).ok()?;
        serde_json::from_slice(&bytes).ok().map(|m| (path, m))
    })
}

/// The table the runs were fitted on: `--input` when given, otherwise the
/// input recorded in the runs' manifests, checked against its hash.
fn resolve_table(settings: &Settings, fits: &[LoadedFit]) -> CliResult<ApcTable> {
    if let Some(input) = settings.get("input") {
        return Ok(load_table(input, settings.format()?)?);
    }
    let mut recorded: Option<(PathBuf, Manifest)> = None;
    for fit in fits {
        let Some((path, manifest)) = manifest_near(&fit.dir) else {
            return Err(CliError::validation(format!(
                "no manifest.json for {}; pass --input with the fitted table",
                fit.dir.display()
            )));
        };
        if let Some((first_path, first)) = &recorded {
            if first.input.sha256 != manifest.input.sha256 {
                return Err(CliError::validation(format!(
                    "runs were fitted on different tables ({} and {})",
                    first_path.display(),
                    path.display()
                )));
            }
        } else {
            recorded = Some((path, manifest));
        }
    }
    let (_, manifest) =
        recorded.ok_or_else(|| CliError::validation("no runs given; pass --input with the table"))?;
    let input = PathBuf::from(&manifest.input.path);
    if sha256_hex(&read_file(&input)?) != manifest.input.sha256 {
        return Err(CliError::validation(format!(
            "{} has changed since it was fitted; pass --input explicitly",
            input.display()
        )));
    }
    Ok(load_table(&input, manifest.format)?)
}

fn require_families(settings: &Settings, fits: &[LoadedFit]) -> CliResult<()> {
    let Some(raw) = settings.get("families") else {
        return Ok(());
    };
    let missing: Vec<&str> = parse_families(raw)?
        .into_iter()
        .filter(|f| !fits.iter().any(|fit| fit.summary.family == *f))
        .map(Family::name)
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(CliError::dependency(format!(
            "requested famil{} {} not found among the fitted runs",
            if missing.len() == 1 { "y" } else { "ies" },
            missing.join(", ")
        )))
    }
}

fn read_draws(fit: &LoadedFit) -> CliResult<PosteriorDraws> {
    Ok(PosteriorDraws::read_csv(fit.dir.join("draws.csv"))?)
}

pub fn compare(settings: &Settings, runs: &[PathBuf]) -> CliResult<()> {
    let out = settings.require_path("out", "--out")?;
    let fits = load_fits(runs)?;
    require_families(settings, &fits)?;
    let table = resolve_table(settings, &fits)?;
    let models: Vec<FittedModel> = fits
        .iter()
        .map(|f| {
            Ok(FittedModel {
                spec: f.summary.spec.clone(),
                draws: read_draws(f)?,
            })
        })
        .collect::<CliResult<_>>()?;
    let report = ComparisonReport::build(&models, &table)?;
    create_dir(&out)?;
    let text = report.to_text();
    write_file(&out.join("report.json"), format!("{}\n", report.to_json()).as_bytes())?;
    write_file(&out.join("report.txt"), text.as_bytes())?;
    print!("{text}");
    Ok(())
}

pub fn simulate(settings: &Settings) -> CliResult<()> {
    let out = settings.require_path("out", "--out")?;
    let seed = settings.require_seed()?;
    let truth = match settings.get("simulate.truth") {
        Some(path) => {
            for key in ["simulate.preset", "simulate.ages", "simulate.periods"] {
                if settings.get(key).is_some() {
                    return Err(CliError::validation(format!("`{key}` conflicts with a truth file")));
                }
            }
            TrueEffects::read_csv(path)?
        }
        None => {
            let preset: Preset = settings.value("simulate.preset")?.unwrap_or(Preset::PrLike);
            let ages = settings.value("simulate.ages")?.unwrap_or(7);
            let periods = settings.value("simulate.periods")?.unwrap_or(15);
            TrueEffects::preset(preset, ages, periods)?
        }
    };
    let defaults = SimulationDesign::default();
    let design = SimulationDesign {
        exposure: settings.value("simulate.exposure")?.unwrap_or(defaults.exposure),
        first_age: settings.value("simulate.first_age")?.unwrap_or(defaults.first_age),
        first_period: settings.value("simulate.first_period")?.unwrap_or(defaults.first_period),
        band_width: settings.value("simulate.band_width")?.unwrap_or(defaults.band_width),
    };
    let table = simulate_table(&truth, &design, seed)?;
    create_dir(&out)?;
    let table_path = out.join("table.csv");
    let truth_path = out.join("truth.csv");
    write_long_csv(&table, &table_path)?;
    truth.write_csv(&truth_path)?;
    println!(
        "{}x{} table -> {}, true effects -> {}",
        table.n_age(),
        table.n_period(),
        table_path.display(),
        truth_path.display()
    );
    Ok(())
}

fn block_only(summaries: &[apc_core::reporting::EffectSummary], block: Block) -> Vec<apc_core::reporting::EffectSummary> {
    summaries.iter().filter(|s| s.block == block).cloned().collect()
}

pub fn plot(settings: &Settings, runs: &[PathBuf]) -> CliResult<()> {
    let out = settings.require_path("out", "--out")?;
    let fits = load_fits(runs)?;
    if settings.get("input").is_none() && fits.is_empty() {
        return Err(CliError::validation("plot needs --input or --runs"));
    }
    let table = resolve_table(settings, &fits)?;
    create_dir(&out)?;
    let mut written = vec![("hexamap.svg".to_string(), hexamap_svg(&table)), ("tfr.svg".to_string(), tfr_svg(&table))];

    let first = |family: Family| fits.iter().find(|f| f.summary.family == family);
    let summaries = |fit: &LoadedFit| -> CliResult<Vec<apc_core::reporting::EffectSummary>> {
        Ok(summarize_effects(&read_draws(fit)?, &fit.summary.spec, &table)?)
    };
    if let Some(apc) = first(Family::Apc) {
        let full = summaries(apc)?;
        for (reduced, block) in [(Family::Ap, Block::Period), (Family::Ac, Block::Cohort)] {
            let Some(fit) = first(reduced) else { continue };
            let svg = effects_overlay_svg(
                &block_only(&full, block),
                &block_only(&summaries(fit)?, block),
                (&apc.summary.label, &fit.summary.label),
            )?;
            written.push((format!("{}_apc_vs_{}.svg", block.name(), family_dir(reduced)), svg));
        }
    }
    for (name, svg) in written {
        let path = out.join(&name);
        write_file(&path, svg.as_bytes())?;
        println!("{}", path.display());
    }
    Ok(())
}

pub fn summarize(settings: &Settings, runs: &[PathBuf]) -> CliResult<()> {
    let fits = load_fits(runs)?;
    let mut text = String::new();
    let _ = writeln!(
        text,
        "{:<34} {:>7} {:>9} {:>9} {:>11} {:>9}",
        "Model", "Draws", "Max R-hat", "Min ESS", "Divergences", "Step"
    );
    for fit in &fits {
        let s = &fit.summary;
        let steps: Vec<f64> = s.chains.iter().map(|c| c.step_size).collect();
        let mean_step = steps.iter().sum::<f64>() / steps.len().max(1) as f64;
        let _ = writeln!(
            text,
            "{:<34} {:>7} {:>9} {:>9} {:>11} {:>9.4}",
            s.label,
            s.draws,
            s.max_rhat.map_or("n/a".into(), |r| format!("{r:.4}")),
            s.min_ess_bulk.map_or("n/a".into(), |e| format!("{e:.0}")),
            s.divergences,
            mean_step
        );
        for w in &s.warnings {
            let _ = writeln!(text, "  warning: {w}");
        }
    }
    if let Some(out) = settings.get("out") {
        let out = PathBuf::from(out);
        create_dir(&out)?;
        write_file(&out.join("diagnostics.txt"), text.as_bytes())?;
    }
    print!("{text}");
    Ok(())
}
