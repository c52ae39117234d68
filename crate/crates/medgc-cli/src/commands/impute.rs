//! `medgc impute`: fit a mixed-effects trajectory model on an external
//! cohort, assign each analysis subject a matched donor, integrate the
//! donor's posterior-mean trajectory over the pre-enrollment window, and
//! append the integral as a new baseline column.

use serde::Serialize;

use medgc::data::write_wide_csv_path;
use medgc::impute::{
    augment_with_cmbp, fit_lmm, CmbpConfig, ExternalCohortDataset, LmmConfig, MatchQuality,
};

use crate::error::CliError;
use crate::manifest::{config_hash, write_text, Manifest};
use crate::settings::{existing, required, Overlay};

#[derive(Debug, Serialize)]
struct Resolved {
    seed: u64,
    burn: usize,
    keep: usize,
    window: f64,
    column: String,
    visit_grid: Option<Vec<f64>>,
}

pub fn run(settings: &Overlay) -> Result<(), CliError> {
    let input = existing(required(settings.input.clone(), "--input")?, "--input")?;
    let cohort_path = existing(required(settings.cohort.clone(), "--cohort")?, "--cohort")?;
    let out_dir = required(settings.out.clone(), "--out")?;

    let lmm_defaults = LmmConfig::default();
    let cmbp_defaults = CmbpConfig::default();
    let resolved = Resolved {
        seed: settings.seed.unwrap_or(0),
        burn: settings.burn.unwrap_or(lmm_defaults.num_burn),
        keep: settings.keep.unwrap_or(lmm_defaults.num_keep),
        window: settings.window.unwrap_or(cmbp_defaults.window),
        column: settings.column.clone().unwrap_or(cmbp_defaults.column_name),
        visit_grid: settings.visit_grid.clone(),
    };

    // Survival validation is not a precondition here: the augmentation only
    // needs the baseline columns, and the dataset may get validated later
    // when it is actually fitted.
    let dataset = super::read_dataset(&input, resolved.visit_grid.clone())?;
    let cohort = ExternalCohortDataset::read_long_csv(&cohort_path)?;
    cohort.validate()?;

    let lmm_config = LmmConfig {
        num_burn: resolved.burn,
        num_keep: resolved.keep,
        rng_seed: resolved.seed,
        ..LmmConfig::default()
    };
    let fit = fit_lmm(&cohort, &lmm_config)?;

    let cmbp_config = CmbpConfig {
        window: resolved.window,
        column_name: resolved.column.clone(),
        rng_seed: resolved.seed,
    };
    let augmentation = augment_with_cmbp(&dataset, &cohort, &fit, &cmbp_config)?;
    for warning in &augmentation.warnings {
        eprintln!("warning: {warning}");
    }

    super::ensure_dir(&out_dir)?;
    let mut manifest = Manifest::new("impute", resolved.seed, config_hash(&resolved)?);
    manifest.input_file("input", &input)?;
    manifest.input_file("cohort", &cohort_path)?;

    let augmented_path = out_dir.join("augmented.csv");
    write_wide_csv_path(&augmentation.dataset, &augmented_path)?;
    manifest.output_file(&augmented_path)?;

    let mut matches_csv = String::from("subject_id,donor_id,quality\n");
    for record in &augmentation.matches {
        matches_csv.push_str(&format!(
            "{},{},{}\n",
            record.subject_id, record.donor_id, record.quality
        ));
    }
    write_text(&out_dir.join("matches.csv"), &matches_csv, Some(&mut manifest))?;

    let mut lmm_json = serde_json::to_string(&fit)
        .map_err(|e| CliError::invalid(format!("cannot encode the mixed-model fit: {e}")))?;
    lmm_json.push('\n');
    write_text(&out_dir.join("lmm.json"), &lmm_json, Some(&mut manifest))?;

    manifest.write(&out_dir)?;

    let count = |q: MatchQuality| {
        augmentation.matches.iter().filter(|m| m.quality == q).count()
    };
    println!(
        "appended `{}` for {} subjects (matches: {} exact, {} sex-relaxed, {} fully relaxed); \
         outputs written to {}",
        resolved.column,
        augmentation.matches.len(),
        count(MatchQuality::Exact),
        count(MatchQuality::SexRelaxed),
        count(MatchQuality::FullyRelaxed),
        out_dir.display()
    );
    Ok(())
}
