//! `medgc gcomp`: load a fitted bank, run posterior G-computation over a
//! regime contrast, and write effect and curve reports.

use std::path::Path;

use serde::Serialize;

use medgc::data::Mode;
use medgc::gcomp::{
    self, effects, run_age_stratified, AgeStratum, GcompConfig, GcompPosterior, RegimePair,
};
use medgc::models::load_bank;
use medgc::report;

use crate::error::CliError;
use crate::manifest::{config_hash, hash_dir, sha256_hex, write_text, Manifest};
use crate::settings::{existing, required, Overlay};

#[derive(Debug, Serialize)]
struct Resolved {
    mode: Mode,
    seed: u64,
    c_star: usize,
    level: f64,
    regimes: RegimePair,
    age_strata: Option<Vec<AgeStratum>>,
    subset: Option<String>,
    emit_samples: bool,
    visit_grid: Vec<f64>,
}

pub fn run(settings: &Overlay) -> Result<(), CliError> {
    let bank_dir = existing(required(settings.bank.clone(), "--bank")?, "--bank")?;
    let input = existing(required(settings.input.clone(), "--input")?, "--input")?;
    let out_dir = required(settings.out.clone(), "--out")?;

    let bank = load_bank(&bank_dir)?;
    if let Some(mode) = settings.mode {
        if mode != bank.mode {
            return Err(CliError::invalid(format!(
                "the bank at {} was fitted in {} mode, not {} mode",
                bank_dir.display(),
                bank.mode,
                mode
            )));
        }
    }

    let regimes = match (&settings.regime, &settings.regime_star) {
        (Some(z), Some(z_star)) => RegimePair::new(z.clone(), z_star.clone())?,
        (None, None) => RegimePair::always_versus_never(bank.num_visits()),
        _ => {
            return Err(CliError::usage(
                "--regime and --regime-star must be given together",
            ))
        }
    };
    if regimes.horizon() != bank.num_visits() - 1 {
        return Err(CliError::invalid(format!(
            "regimes cover {} exposure visits but the bank's grid needs {} (J − 1)",
            regimes.horizon(),
            bank.num_visits() - 1
        )));
    }

    let resolved = Resolved {
        mode: bank.mode,
        seed: settings.seed.unwrap_or(0),
        c_star: settings.c_star.unwrap_or(10_000),
        level: settings.level.unwrap_or(0.95),
        regimes,
        age_strata: settings.age_strata.clone(),
        subset: settings.subset.as_ref().map(|s| s.label.clone()),
        emit_samples: settings.emit_samples.unwrap_or(false),
        visit_grid: settings.visit_grid.clone().unwrap_or_else(|| bank.visit_grid.clone()),
    };
    if !(resolved.level > 0.0 && resolved.level < 1.0) {
        return Err(CliError::invalid(format!(
            "interval level must lie in (0, 1); got {}",
            resolved.level
        )));
    }

    let mut dataset = super::read_dataset(&input, Some(resolved.visit_grid.clone()))?;
    if dataset.visit_grid != bank.visit_grid {
        return Err(CliError::invalid(format!(
            "the dataset's visit grid {:?} disagrees with the bank's {:?}",
            dataset.visit_grid, bank.visit_grid
        )));
    }
    super::require_clean(&dataset, bank.mode)?;
    if let Some(subset) = &settings.subset {
        dataset = super::apply_subset(dataset, subset)?;
    }

    let config = GcompConfig {
        num_trajectories: resolved.c_star,
        level: resolved.level,
        age_strata: resolved.age_strata.clone(),
        rng_seed: resolved.seed,
        ..GcompConfig::default()
    };
    config.validate()?;

    super::ensure_dir(&out_dir)?;
    let mut manifest = Manifest::new("gcomp", resolved.seed, config_hash(&resolved)?);
    manifest.input_file("input", &input)?;
    let bank_digest = serde_json::to_vec(&hash_dir(&bank_dir)?)
        .map_err(|e| CliError::invalid(format!("cannot encode the bank digest: {e}")))?;
    manifest.input_digest("bank", sha256_hex(&bank_digest));

    let mut tables = Vec::new();
    if resolved.age_strata.is_some() {
        let strata = run_age_stratified(&bank, &dataset, &resolved.regimes, &config)?;
        for result in &strata {
            let suffix = stratum_suffix(&result.stratum);
            write_reports(
                &out_dir,
                &format!("effects_{suffix}"),
                &format!("curves_{suffix}"),
                &result.posterior,
                resolved.level,
                resolved.emit_samples,
                &mut manifest,
            )?;
            let summary = effects(&result.posterior, resolved.level)?;
            tables.push(format!(
                "age stratum {} ({} subjects)\n{}",
                result.stratum,
                result.num_subjects,
                report::effects_table(&summary)
            ));
        }
    } else {
        let baselines = dataset.baselines();
        let posterior = gcomp::run(&bank, &baselines, &resolved.regimes, &config)?;
        write_reports(
            &out_dir,
            "effects",
            "curves",
            &posterior,
            resolved.level,
            resolved.emit_samples,
            &mut manifest,
        )?;
        let summary = effects(&posterior, resolved.level)?;
        tables.push(report::effects_table(&summary));
    }

    manifest.write(&out_dir)?;
    print!("{}", tables.join("\n"));
    println!("reports written to {}", out_dir.display());
    Ok(())
}

/// Writes one posterior's effect and curve reports under `out_dir`.
fn write_reports(
    out_dir: &Path,
    effects_stem: &str,
    curves_stem: &str,
    posterior: &GcompPosterior,
    level: f64,
    emit_samples: bool,
    manifest: &mut Manifest,
) -> Result<(), CliError> {
    let summary = effects(posterior, level)?;
    write_text(
        &out_dir.join(format!("{effects_stem}.csv")),
        &report::effects_csv(&summary)?,
        Some(manifest),
    )?;
    write_text(
        &out_dir.join(format!("{effects_stem}.json")),
        &report::effects_json(&summary, emit_samples)?,
        Some(manifest),
    )?;
    write_text(
        &out_dir.join(format!("{effects_stem}.txt")),
        &report::effects_table(&summary),
        Some(manifest),
    )?;
    write_text(
        &out_dir.join(format!("{curves_stem}.csv")),
        &report::curves_csv(posterior, level)?,
        Some(manifest),
    )?;
    write_text(
        &out_dir.join(format!("{curves_stem}.json")),
        &report::curves_json(posterior, level, emit_samples)?,
        Some(manifest),
    )?;
    Ok(())
}

/// File-name-safe label for an age band: `[45, 60)` becomes `age45-60`, and
/// fractional bounds spell the point as `p` (`47.5` → `47p5`).
fn stratum_suffix(stratum: &AgeStratum) -> String {
    let fmt = |v: f64| {
        let text = format!("{v}");
        text.replace('.', "p").replace('-', "m")
    };
    format!("age{}-{}", fmt(stratum.lower), fmt(stratum.upper))
}
