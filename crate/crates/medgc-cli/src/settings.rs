//! Layered run settings: built-in defaults, then a plain-text `key = value`
//! configuration file, then `MEDGC_*` environment variables (paths and
//! seeds only), then command-line flags — later layers win.
//!
//! # Configuration file
//!
//! One `key = value` pair per line; `#` starts a comment. Keys mirror the
//! long flag names with `-` replaced by `_`:
//!
//! ```text
//! mode         = competing          # single | competing
//! input        = analysis.csv
//! cohort       = external.csv
//! bank         = artifacts/bank
//! out          = artifacts/report
//! seed         = 7
//! workers      = 4
//! c_star       = 10000
//! burn         = 1000
//! keep         = 1000
//! regime       = 1,1
//! regime_star  = 0,0
//! age_strata   = 45-60,60-75
//! subset       = sex=female
//! level        = 0.95
//! emit_samples = true
//! scenario     = misspecified       # correct | misspecified
//! estimators   = bart,glm
//! sample_size  = 2000
//! replicates   = 100
//! glm_bootstrap = 200
//! truth_trajectories = 400000
//! truth_blocks = 20
//! window       = 20
//! column       = cmbp
//! visit_grid   = 3,6,9
//! ```
//!
//! # Environment variables
//!
//! `MEDGC_INPUT`, `MEDGC_COHORT`, `MEDGC_BANK`, `MEDGC_OUT` (paths) and
//! `MEDGC_SEED` (the master seed) override the configuration file; flags
//! override everything.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use medgc::data::Mode;
use medgc::gcomp::AgeStratum;

use crate::error::CliError;

/// Batch pipelines for interventional mediation analysis: direct, indirect,
/// and total effects of time-varying exposures on survival outcomes.
#[derive(Debug, Parser)]
#[command(name = "medgc", version, about, max_term_width = 100)]
pub struct Cli {
    /// Plain-text key=value configuration file; flags and MEDGC_* variables
    /// override its entries.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Worker threads (default: all available cores). Outputs are
    /// bit-identical at any worker count.
    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the bank of conditional outcome, confounder, and mediator models
    /// from an analysis dataset and persist it with a provenance manifest.
    Fit(FitArgs),
    /// Run posterior G-computation with a fitted bank and write effect and
    /// curve reports (CSV, JSON, and a readable table).
    Gcomp(GcompArgs),
    /// Run a simulation study: replicated synthetic datasets, competing
    /// estimators, and bias/MSE/coverage against the known ground truth.
    Simulate(SimulateArgs),
    /// Append an imputed cumulative-exposure baseline column from an
    /// external cohort via a mixed-effects trajectory model.
    Impute(ImputeArgs),
    /// Re-render a human-readable table from saved full-precision JSON
    /// (an effects or simulation report).
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Analysis dataset (wide CSV: id, baseline_*, z_*, l_*, m_*, time,
    /// delta, and cause in competing mode).
    #[arg(long, value_name = "CSV")]
    pub input: Option<PathBuf>,
    /// Outcome structure: `single` or `competing`.
    #[arg(long, value_name = "MODE")]
    pub mode: Option<String>,
    /// Output directory for the serialized model bank.
    #[arg(long, value_name = "DIR")]
    pub bank: Option<PathBuf>,
    /// Master seed; per-model chains derive their own streams from it.
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    /// Burn-in iterations per model chain.
    #[arg(long, value_name = "N")]
    pub burn: Option<usize>,
    /// Kept posterior draws per model chain.
    #[arg(long, value_name = "N")]
    pub keep: Option<usize>,
    /// Visit times t_1 < … < t_J, comma-separated (default: 1, 2, …, J).
    #[arg(long, value_name = "LIST")]
    pub visit_grid: Option<String>,
}

#[derive(Debug, Args)]
pub struct GcompArgs {
    /// Directory holding a bank written by `fit`.
    #[arg(long, value_name = "DIR")]
    pub bank: Option<PathBuf>,
    /// Analysis dataset supplying the baseline covariate pool (wide CSV).
    #[arg(long, value_name = "CSV")]
    pub input: Option<PathBuf>,
    /// Output directory for the effect and curve reports.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Expected mode; the run aborts if the bank was fitted differently.
    #[arg(long, value_name = "MODE")]
    pub mode: Option<String>,
    /// Master seed for the simulation streams.
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    /// Simulated trajectories per posterior draw and arm.
    #[arg(long, value_name = "N")]
    pub c_star: Option<usize>,
    /// Exposure regime z as comma-separated 0/1 decisions for visits
    /// 1..J-1 (default: all 1).
    #[arg(long, value_name = "LIST")]
    pub regime: Option<String>,
    /// Comparison regime z* in the same format (default: all 0).
    #[arg(long, value_name = "LIST")]
    pub regime_star: Option<String>,
    /// Age strata as comma-separated `lower-upper` bands on baseline age,
    /// e.g. `45-60,60-75`; each stratum is reported separately.
    #[arg(long, value_name = "BANDS")]
    pub age_strata: Option<String>,
    /// Baseline filter `column=value` applied before the run; `female` and
    /// `male` are accepted as 1 and 0, e.g. `sex=female`.
    #[arg(long, value_name = "FILTER")]
    pub subset: Option<String>,
    /// Credible-interval level in (0, 1).
    #[arg(long, value_name = "LEVEL")]
    pub level: Option<f64>,
    /// Embed raw posterior samples in the JSON reports.
    #[arg(long)]
    pub emit_samples: bool,
    /// Visit times override for reading the CSV (default: the bank's grid).
    #[arg(long, value_name = "LIST")]
    pub visit_grid: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Output directory for the study report and the ground-truth cache.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Data-generating scenario: `correct` (linear predictors, matching the
    /// estimators) or `misspecified` (log/interaction-bent predictors).
    #[arg(long, value_name = "NAME")]
    pub scenario: Option<String>,
    /// Estimators to run, comma-separated from {bart, glm}.
    #[arg(long, value_name = "LIST")]
    pub estimators: Option<String>,
    /// Subjects per replicated dataset.
    #[arg(long, value_name = "N")]
    pub sample_size: Option<usize>,
    /// Number of replicated datasets.
    #[arg(long, value_name = "N")]
    pub replicates: Option<usize>,
    /// Master seed for replicate generation, estimation, and the truth.
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    /// Simulated trajectories per posterior draw in each estimator's
    /// G-computation step.
    #[arg(long, value_name = "N")]
    pub c_star: Option<usize>,
    /// Burn-in iterations per BART chain.
    #[arg(long, value_name = "N")]
    pub burn: Option<usize>,
    /// Kept posterior draws per BART chain.
    #[arg(long, value_name = "N")]
    pub keep: Option<usize>,
    /// Bootstrap resamples behind the parametric comparator's intervals
    /// (0 keeps its point estimates with degenerate intervals).
    #[arg(long, value_name = "N")]
    pub glm_bootstrap: Option<usize>,
    /// Nominal credible/confidence level in (0, 1).
    #[arg(long, value_name = "LEVEL")]
    pub level: Option<f64>,
    /// Total trajectories spent on the ground truth.
    #[arg(long, value_name = "N")]
    pub truth_trajectories: Option<usize>,
    /// Independent blocks behind the truth's Monte Carlo standard error.
    #[arg(long, value_name = "N")]
    pub truth_blocks: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ImputeArgs {
    /// Analysis dataset to augment (wide CSV with age, race, sex, and bmi
    /// baseline columns).
    #[arg(long, value_name = "CSV")]
    pub input: Option<PathBuf>,
    /// External cohort (long CSV: id, race, sex, bmi, age, mbp).
    #[arg(long, value_name = "CSV")]
    pub cohort: Option<PathBuf>,
    /// Output directory for the augmented dataset and the match log.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Master seed for the mixed-model chain and the donor assignment.
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    /// Burn-in iterations of the mixed-model chain.
    #[arg(long, value_name = "N")]
    pub burn: Option<usize>,
    /// Kept posterior draws of the mixed-model chain.
    #[arg(long, value_name = "N")]
    pub keep: Option<usize>,
    /// Length of the pre-enrollment integration window in years.
    #[arg(long, value_name = "YEARS")]
    pub window: Option<f64>,
    /// Name of the appended baseline column.
    #[arg(long, value_name = "NAME")]
    pub column: Option<String>,
    /// Visit times override for reading the CSV (default: 1, 2, …, J).
    #[arg(long, value_name = "LIST")]
    pub visit_grid: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Saved full-precision JSON report (effects.json or sim.json).
    #[arg(long, value_name = "JSON")]
    pub input: Option<PathBuf>,
    /// Write the table here instead of standard output.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

// ---------------------------------------------------------------------------
// Scenario and estimator selection
// ---------------------------------------------------------------------------

/// Simulation data-generating scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Linear predictors: the parametric comparator is correctly specified.
    Correct,
    /// Log/interaction-transformed predictors: the parametric comparator is
    /// misspecified while the flexible estimator is not told the bend.
    Misspecified,
}

impl Scenario {
    /// The label used in reports and file names.
    pub fn label(self) -> &'static str {
        match self {
            Scenario::Correct => "correct",
            Scenario::Misspecified => "misspecified",
        }
    }
}

/// Which estimator competes in a simulation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Sequential BART models plus posterior G-computation.
    Bart,
    /// Maximum-likelihood structural GLMs plugged into G-computation.
    Glm,
}

/// A baseline filter `column = value`.
#[derive(Debug, Clone, Serialize)]
pub struct Subset {
    /// Baseline covariate column name.
    pub column: String,
    /// Required value.
    pub value: f64,
    /// The original filter text, kept for messages and manifests.
    pub label: String,
}

// ---------------------------------------------------------------------------
// The overlay
// ---------------------------------------------------------------------------

/// One layer of settings; `None` means "not set at this layer".
#[derive(Debug, Default, Clone)]
pub struct Overlay {
    pub mode: Option<Mode>,
    pub input: Option<PathBuf>,
    pub cohort: Option<PathBuf>,
    pub bank: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub c_star: Option<usize>,
    pub burn: Option<usize>,
    pub keep: Option<usize>,
    pub regime: Option<Vec<f64>>,
    pub regime_star: Option<Vec<f64>>,
    pub age_strata: Option<Vec<AgeStratum>>,
    pub subset: Option<Subset>,
    pub level: Option<f64>,
    pub emit_samples: Option<bool>,
    pub scenario: Option<Scenario>,
    pub estimators: Option<Vec<EstimatorKind>>,
    pub sample_size: Option<usize>,
    pub replicates: Option<usize>,
    pub glm_bootstrap: Option<usize>,
    pub truth_trajectories: Option<usize>,
    pub truth_blocks: Option<usize>,
    pub window: Option<f64>,
    pub column: Option<String>,
    pub visit_grid: Option<Vec<f64>>,
}

impl Overlay {
    /// Applies `over` on top of `self`: set fields in `over` win.
    fn overlaid(mut self, over: Overlay) -> Overlay {
        macro_rules! take {
            ($($field:ident),* $(,)?) => {
                $(if over.$field.is_some() { self.$field = over.$field; })*
            };
        }
        take!(
            mode, input, cohort, bank, out, seed, workers, c_star, burn, keep, regime,
            regime_star, age_strata, subset, level, emit_samples, scenario, estimators,
            sample_size, replicates, glm_bootstrap, truth_trajectories, truth_blocks,
            window, column, visit_grid,
        );
        self
    }

    /// Parses one configuration-file entry into the overlay.
    fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "mode" => self.mode = Some(parse_mode(value)?),
            "input" => self.input = Some(PathBuf::from(value)),
            "cohort" => self.cohort = Some(PathBuf::from(value)),
            "bank" => self.bank = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            "seed" => self.seed = Some(parse_number(value, "seed")?),
            "workers" => self.workers = Some(parse_number(value, "workers")?),
            "c_star" => self.c_star = Some(parse_number(value, "c_star")?),
            "burn" => self.burn = Some(parse_number(value, "burn")?),
            "keep" => self.keep = Some(parse_number(value, "keep")?),
            "regime" => self.regime = Some(parse_regime(value)?),
            "regime_star" => self.regime_star = Some(parse_regime(value)?),
            "age_strata" => self.age_strata = Some(parse_age_strata(value)?),
            "subset" => self.subset = Some(parse_subset(value)?),
            "level" => self.level = Some(parse_number(value, "level")?),
            "emit_samples" => self.emit_samples = Some(parse_bool(value)?),
            "scenario" => self.scenario = Some(parse_scenario(value)?),
            "estimators" => self.estimators = Some(parse_estimators(value)?),
            "sample_size" => self.sample_size = Some(parse_number(value, "sample_size")?),
            "replicates" => self.replicates = Some(parse_number(value, "replicates")?),
            "glm_bootstrap" => {
                self.glm_bootstrap = Some(parse_number(value, "glm_bootstrap")?)
            }
            "truth_trajectories" => {
                self.truth_trajectories = Some(parse_number(value, "truth_trajectories")?)
            }
            "truth_blocks" => self.truth_blocks = Some(parse_number(value, "truth_blocks")?),
            "window" => self.window = Some(parse_number(value, "window")?),
            "column" => self.column = Some(value.to_string()),
            "visit_grid" => self.visit_grid = Some(parse_float_list(value, "visit_grid")?),
            _ => return Err(CliError::usage(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// Reads a configuration file (`key = value` lines, `#` comments).
    fn from_file(path: &Path) -> Result<Overlay, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::usage(format!("cannot read configuration {}: {e}", path.display()))
        })?;
        let mut overlay = Overlay::default();
        for (index, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::usage(format!(
                    "{}:{}: expected `key = value`, got `{}`",
                    path.display(),
                    index + 1,
                    raw.trim()
                ))
            })?;
            overlay.set(key.trim(), value.trim()).map_err(|e| {
                CliError::usage(format!("{}:{}: {e}", path.display(), index + 1))
            })?;
        }
        Ok(overlay)
    }

    /// Reads the `MEDGC_*` environment overrides (paths and the seed).
    fn from_env() -> Result<Overlay, CliError> {
        let var = |name: &str| std::env::var(name).ok().filter(|v| !v.is_empty());
        let mut overlay = Overlay::default();
        if let Some(v) = var("MEDGC_INPUT") {
            overlay.input = Some(PathBuf::from(v));
        }
        if let Some(v) = var("MEDGC_COHORT") {
            overlay.cohort = Some(PathBuf::from(v));
        }
        if let Some(v) = var("MEDGC_BANK") {
            overlay.bank = Some(PathBuf::from(v));
        }
        if let Some(v) = var("MEDGC_OUT") {
            overlay.out = Some(PathBuf::from(v));
        }
        if let Some(v) = var("MEDGC_SEED") {
            overlay.seed = Some(
                v.parse().map_err(|_| {
                    CliError::usage(format!("MEDGC_SEED must be an unsigned integer; got `{v}`"))
                })?,
            );
        }
        Ok(overlay)
    }

    /// Converts the parsed command-line flags into the top overlay layer.
    fn from_command(cli: &Cli) -> Result<Overlay, CliError> {
        let mut overlay = Overlay { workers: cli.workers, ..Overlay::default() };
        match &cli.command {
            Command::Fit(args) => {
                overlay.input = args.input.clone();
                overlay.mode = args.mode.as_deref().map(parse_mode).transpose()?;
                overlay.bank = args.bank.clone();
                overlay.seed = args.seed;
                overlay.burn = args.burn;
                overlay.keep = args.keep;
                overlay.visit_grid = args
                    .visit_grid
                    .as_deref()
                    .map(|v| parse_float_list(v, "--visit-grid"))
                    .transpose()?;
            }
            Command::Gcomp(args) => {
                overlay.bank = args.bank.clone();
                overlay.input = args.input.clone();
                overlay.out = args.out.clone();
                overlay.mode = args.mode.as_deref().map(parse_mode).transpose()?;
                overlay.seed = args.seed;
                overlay.c_star = args.c_star;
                overlay.regime = args.regime.as_deref().map(parse_regime).transpose()?;
                overlay.regime_star =
                    args.regime_star.as_deref().map(parse_regime).transpose()?;
                overlay.age_strata =
                    args.age_strata.as_deref().map(parse_age_strata).transpose()?;
                overlay.subset = args.subset.as_deref().map(parse_subset).transpose()?;
                overlay.level = args.level;
                // A bare flag cannot express "unset", so absence defers to
                // the lower layers only when they set it.
                if args.emit_samples {
                    overlay.emit_samples = Some(true);
                }
                overlay.visit_grid = args
                    .visit_grid
                    .as_deref()
                    .map(|v| parse_float_list(v, "--visit-grid"))
                    .transpose()?;
            }
            Command::Simulate(args) => {
                overlay.out = args.out.clone();
                overlay.scenario = args.scenario.as_deref().map(parse_scenario).transpose()?;
                overlay.estimators =
                    args.estimators.as_deref().map(parse_estimators).transpose()?;
                overlay.sample_size = args.sample_size;
                overlay.replicates = args.replicates;
                overlay.seed = args.seed;
                overlay.c_star = args.c_star;
                overlay.burn = args.burn;
                overlay.keep = args.keep;
                overlay.glm_bootstrap = args.glm_bootstrap;
                overlay.level = args.level;
                overlay.truth_trajectories = args.truth_trajectories;
                overlay.truth_blocks = args.truth_blocks;
            }
            Command::Impute(args) => {
                overlay.input = args.input.clone();
                overlay.cohort = args.cohort.clone();
                overlay.out = args.out.clone();
                overlay.seed = args.seed;
                overlay.burn = args.burn;
                overlay.keep = args.keep;
                overlay.window = args.window;
                overlay.column = args.column.clone();
                overlay.visit_grid = args
                    .visit_grid
                    .as_deref()
                    .map(|v| parse_float_list(v, "--visit-grid"))
                    .transpose()?;
            }
            Command::Report(args) => {
                overlay.input = args.input.clone();
                overlay.out = args.out.clone();
            }
        }
        Ok(overlay)
    }
}

/// Resolves the effective settings for a parsed invocation: defaults, then
/// the configuration file, then the environment, then the flags.
pub fn resolve(cli: &Cli) -> Result<Overlay, CliError> {
    let file = match &cli.config {
        Some(path) => Overlay::from_file(path)?,
        None => Overlay::default(),
    };
    let env = Overlay::from_env()?;
    let flags = Overlay::from_command(cli)?;
    Ok(file.overlaid(env).overlaid(flags))
}

// ---------------------------------------------------------------------------
// Requirement helpers
// ---------------------------------------------------------------------------

/// Unwraps a setting that the subcommand cannot run without.
pub fn required<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| {
        CliError::usage(format!(
            "{flag} is required (set it as a flag, a MEDGC_* variable, or a configuration key)"
        ))
    })
}

/// Checks that a required input path actually exists.
pub fn existing(path: PathBuf, flag: &str) -> Result<PathBuf, CliError> {
    if !path.exists() {
        return Err(CliError::usage(format!("{flag}: {} does not exist", path.display())));
    }
    Ok(path)
}

// ---------------------------------------------------------------------------
// Value parsers (shared by the file, the environment, and the flags)
// ---------------------------------------------------------------------------

fn parse_number<T: std::str::FromStr>(text: &str, what: &str) -> Result<T, CliError> {
    text.parse().map_err(|_| CliError::usage(format!("{what} must be a number; got `{text}`")))
}

/// `single` or `competing`.
pub fn parse_mode(text: &str) -> Result<Mode, CliError> {
    match text {
        "single" => Ok(Mode::Single),
        "competing" => Ok(Mode::Competing),
        _ => Err(CliError::usage(format!("mode must be `single` or `competing`; got `{text}`"))),
    }
}

fn parse_float_list(text: &str, what: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| CliError::usage(format!("{what}: `{t}` is not a number")))
        })
        .collect()
}

/// Comma-separated 0/1 exposure decisions, e.g. `1,1,0`.
pub fn parse_regime(text: &str) -> Result<Vec<f64>, CliError> {
    let values = parse_float_list(text, "regime")?;
    if values.iter().any(|v| *v != 0.0 && *v != 1.0) {
        return Err(CliError::usage(format!("regimes must be 0/1 decisions; got `{text}`")));
    }
    Ok(values)
}

/// Comma-separated `lower-upper` age bands, e.g. `45-60,60-75`.
pub fn parse_age_strata(text: &str) -> Result<Vec<AgeStratum>, CliError> {
    let mut strata = Vec::new();
    for band in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let (lower, upper) = band.split_once('-').ok_or_else(|| {
            CliError::usage(format!("age band `{band}` must look like `lower-upper`"))
        })?;
        let lower: f64 = parse_number(lower.trim(), "age band lower bound")?;
        let upper: f64 = parse_number(upper.trim(), "age band upper bound")?;
        if !(lower < upper) {
            return Err(CliError::usage(format!(
                "age band `{band}` must have lower < upper"
            )));
        }
        strata.push(AgeStratum { lower, upper });
    }
    if strata.is_empty() {
        return Err(CliError::usage("age_strata lists no bands".to_string()));
    }
    Ok(strata)
}

/// A `column=value` filter; `female` and `male` are accepted as 1 and 0.
pub fn parse_subset(text: &str) -> Result<Subset, CliError> {
    let (column, value) = text.split_once('=').ok_or_else(|| {
        CliError::usage(format!("subset `{text}` must look like `column=value`"))
    })?;
    let column = column.trim();
    let raw = value.trim();
    if column.is_empty() {
        return Err(CliError::usage(format!("subset `{text}` names no column")));
    }
    let value = match raw {
        "female" => 1.0,
        "male" => 0.0,
        _ => raw.parse::<f64>().map_err(|_| {
            CliError::usage(format!(
                "subset value `{raw}` must be a number, `female`, or `male`"
            ))
        })?,
    };
    Ok(Subset { column: column.to_string(), value, label: text.to_string() })
}

fn parse_bool(text: &str) -> Result<bool, CliError> {
    match text {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::usage(format!("expected a boolean; got `{text}`"))),
    }
}

/// `correct` or `misspecified`.
pub fn parse_scenario(text: &str) -> Result<Scenario, CliError> {
    match text {
        "correct" => Ok(Scenario::Correct),
        "misspecified" => Ok(Scenario::Misspecified),
        _ => Err(CliError::usage(format!(
            "scenario must be `correct` or `misspecified`; got `{text}`"
        ))),
    }
}

/// Comma-separated estimator names from {bart, glm}.
pub fn parse_estimators(text: &str) -> Result<Vec<EstimatorKind>, CliError> {
    let mut kinds = Vec::new();
    for name in text.split(',').map(str::trim).filter(|t| !t.is_empty()) {
        let kind = match name {
            "bart" => EstimatorKind::Bart,
            "glm" => EstimatorKind::Glm,
            _ => {
                return Err(CliError::usage(format!(
                    "unknown estimator `{name}` (available: bart, glm)"
                )))
            }
        };
        if !kinds.contains(&kind) {
            kinds.push(kind);
        }
    }
    if kinds.is_empty() {
        return Err(CliError::usage("estimators lists no names".to_string()));
    }
    Ok(kinds)
}
