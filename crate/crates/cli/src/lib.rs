//! `bapc`: fit, compare and plot Bayesian age-period-cohort models from the
//! command line.

mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{FitSummary, Manifest};
pub use config::{FitConfig, Settings};
pub use error::{CliError, CliResult, ErrorKind};

#[derive(Debug, Parser)]
#[command(name = "bapc", version, about = "Bayesian age-period-cohort models for event/exposure tables")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand. Each maps onto a config key and
/// overrides the value from `--config`.
#[derive(Debug, Args, Default)]
pub struct Common {
    /// Input table (long CSV `age_group,period,births,exposure`, or wide CSV).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Input layout: long or wide.
    #[arg(long)]
    pub format: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Config file of `dotted.key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Extra `key=value` setting; repeatable, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the posterior of each requested model family.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Comma-separated families, e.g. APC,AP,AC,A.
        #[arg(long)]
        families: Option<String>,
        /// Precision prior: sbeta2 or gamma.
        #[arg(long)]
        prior: Option<String>,
        #[arg(long)]
        chains: Option<usize>,
        #[arg(long)]
        warmup: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        /// Mass matrix: dense or diagonal.
        #[arg(long)]
        metric: Option<String>,
    },
    /// LOOIC, WAIC, RSS shares and effect areas across fitted runs.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Fit output directories (a run directory or single family directories).
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        /// Families that must be present; a missing one is an error.
        #[arg(long)]
        families: Option<String>,
    },
    /// Draw a synthetic table from known effects.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Effect shapes: pr-like or zero.
        #[arg(long)]
        preset: Option<String>,
        /// CSV of true effects (`block,level,value`) instead of a preset.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        ages: Option<usize>,
        #[arg(long)]
        periods: Option<usize>,
        /// Person-years per cell.
        #[arg(long)]
        exposure: Option<f64>,
    },
    /// Hexamap and TFR figures for a table, plus effect overlays for fitted runs.
    Plot {
        #[command(flatten)]
        common: Common,
        #[arg(long, num_args = 1..)]
        runs: Vec<PathBuf>,
    },
    /// Convergence diagnostics of fitted runs.
    Summarize {
        #[command(flatten)]
        common: Common,
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
    },
}

impl Common {
    /// Config file values, then flags, then `--set` pairs.
    pub fn settings(&self) -> CliResult<Settings> {
        let mut s = match &self.config {
            Some(path) => Settings::load(path)?,
            None => Settings::default(),
        };
        s.set_opt("input", self.input.as_ref().map(|p| p.display()))?;
        s.set_opt("format", self.format.as_ref())?;
        s.set_opt("out", self.out.as_ref().map(|p| p.display()))?;
        s.set_opt("seed", self.seed)?;
        Ok(s)
    }

    fn apply_set(&self, s: &mut Settings) -> CliResult<()> {
        for pair in &self.set {
            s.set_pair(pair)?;
        }
        Ok(())
    }
}

/// Runs one parsed command.
pub fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Fit {
            common,
            families,
            prior,
            chains,
            warmup,
            samples,
            metric,
        } => {
            let mut s = common.settings()?;
            s.set_opt("families", families)?;
            s.set_opt("prior", prior)?;
            s.set_opt("sampler.chains", chains)?;
            s.set_opt("sampler.warmup_iters", warmup)?;
            s.set_opt("sampler.sampling_iters", samples)?;
            s.set_opt("sampler.metric", metric)?;
            common.apply_set(&mut s)?;
            commands::fit(&FitConfig::from_settings(&s)?, &s)
        }
        Command::Compare { common, runs, families } => {
            let mut s = common.settings()?;
            s.set_opt("families", families)?;
            common.apply_set(&mut s)?;
            commands::compare(&s, &runs)
        }
        Command::Simulate {
            common,
            preset,
            truth,
            ages,
            periods,
            exposure,
        } => {
            let mut s = common.settings()?;
            s.set_opt("simulate.preset", preset)?;
            s.set_opt("simulate.truth", truth.as_ref().map(|p| p.display()))?;
            s.set_opt("simulate.ages", ages)?;
            s.set_opt("simulate.periods", periods)?;
            s.set_opt("simulate.exposure", exposure)?;
            common.apply_set(&mut s)?;
            commands::simulate(&s)
        }
        Command::Plot { common, runs } => {
            let mut s = common.settings()?;
            common.apply_set(&mut s)?;
            commands::plot(&s, &runs)
        }
        Command::Summarize { common, runs } => {
            let mut s = common.settings()?;
            common.apply_set(&mut s)?;
            commands::summarize(&s, &runs)
        }
    }
}

/// Parses `args` (program name first) and runs the command. Returns the
/// process exit status; errors go to stderr as JSON.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            let err = CliError::validation(e.render().to_string().trim().to_string());
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("{}", err.to_json());
            err.exit_code()
        }
    }
}
