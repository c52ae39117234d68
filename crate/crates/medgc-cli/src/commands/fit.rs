//! `medgc fit`: read and validate an analysis dataset, fit the bank of
//! conditional models, and persist it with a provenance manifest.

use serde::Serialize;

use medgc::data::Mode;
use medgc::models::{fit_bank, save_bank, BankConfig};

use crate::error::CliError;
use crate::manifest::{config_hash, hash_dir, Manifest};
use crate::settings::{existing, required, Overlay};

/// The effective configuration; its canonical JSON is digested into the
/// manifest so identical reruns can be recognized.
#[derive(Debug, Serialize)]
struct Resolved {
    mode: Mode,
    seed: u64,
    burn: usize,
    keep: usize,
    visit_grid: Option<Vec<f64>>,
}

pub fn run(settings: &Overlay) -> Result<(), CliError> {
    let input = existing(required(settings.input.clone(), "--input")?, "--input")?;
    let mode = required(settings.mode, "--mode")?;
    let bank_dir = required(settings.bank.clone(), "--bank")?;

    let defaults = BankConfig::default();
    let resolved = Resolved {
        mode,
        seed: settings.seed.unwrap_or(0),
        burn: settings.burn.unwrap_or(defaults.continuous.num_burn),
        keep: settings.keep.unwrap_or(defaults.continuous.num_keep),
        visit_grid: settings.visit_grid.clone(),
    };

    let dataset = super::read_dataset(&input, resolved.visit_grid.clone())?;
    super::require_clean(&dataset, mode)?;

    let mut config = BankConfig::default();
    config.rng_seed = resolved.seed;
    config.continuous.num_burn = resolved.burn;
    config.continuous.num_keep = resolved.keep;
    config.probit.num_burn = resolved.burn;
    config.probit.num_keep = resolved.keep;
    config.validate().map_err(CliError::from)?;

    let bank = fit_bank(&dataset, mode, &config)?;
    save_bank(&bank, &bank_dir)?;

    let mut manifest = Manifest::new("fit", resolved.seed, config_hash(&resolved)?);
    manifest.input_file("input", &input)?;
    for (name, digest) in hash_dir(&bank_dir)? {
        manifest.outputs.insert(name, digest);
    }
    manifest.write(&bank_dir)?;

    println!(
        "fitted {} posterior draws over {} visits ({} subjects); bank written to {}",
        bank.num_draws,
        bank.num_visits(),
        dataset.subjects.len(),
        bank_dir.display()
    );
    Ok(())
}
