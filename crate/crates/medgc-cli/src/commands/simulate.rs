//! `medgc simulate`: generate replicated synthetic cohorts from a known
//! data-generating process, run the competing estimators, and report bias,
//! MSE, and interval coverage against the Monte Carlo ground truth.
//!
//! The ground truth is expensive, so it is cached in the output directory
//! (`truth.json`) keyed by a digest of everything it depends on; reruns that
//! change only estimator settings reuse it.

use serde::{Deserialize, Serialize};

use medgc::gcomp::RegimePair;
use medgc::models::BankConfig;
use medgc::report;
use medgc::sim::{
    run_study, synthetic_baselines, true_effects, BartEstimator, DgpSpec, EffectEstimator,
    GlmBank, GlmPluginEstimator, StudyConfig, Transform, TrueEffects,
};

use crate::error::CliError;
use crate::manifest::{config_hash, write_text, Manifest};
use crate::settings::{required, EstimatorKind, Overlay, Scenario};

#[derive(Debug, Serialize)]
struct Resolved {
    scenario: Scenario,
    estimators: Vec<EstimatorKind>,
    sample_size: usize,
    replicates: usize,
    seed: u64,
    c_star: usize,
    burn: usize,
    keep: usize,
    glm_bootstrap: usize,
    level: f64,
    truth_trajectories: usize,
    truth_blocks: usize,
}

/// Everything the cached ground truth depends on.
#[derive(Debug, Serialize)]
struct TruthKey<'a> {
    scenario: Scenario,
    seed: u64,
    truth_trajectories: usize,
    truth_blocks: usize,
    regimes: &'a RegimePair,
}

/// The cache file: the dependency digest plus the truth itself.
#[derive(Debug, Serialize, Deserialize)]
struct TruthCache {
    config_hash: String,
    truth: TrueEffects,
}

pub fn run(settings: &Overlay) -> Result<(), CliError> {
    let out_dir = required(settings.out.clone(), "--out")?;
    let resolved = Resolved {
        scenario: settings.scenario.unwrap_or(Scenario::Correct),
        estimators: settings
            .estimators
            .clone()
            .unwrap_or_else(|| vec![EstimatorKind::Bart, EstimatorKind::Glm]),
        sample_size: settings.sample_size.unwrap_or(300),
        replicates: settings.replicates.unwrap_or(20),
        seed: settings.seed.unwrap_or(0),
        c_star: settings.c_star.unwrap_or(500),
        burn: settings.burn.unwrap_or(150),
        keep: settings.keep.unwrap_or(150),
        glm_bootstrap: settings.glm_bootstrap.unwrap_or(200),
        level: settings.level.unwrap_or(0.95),
        truth_trajectories: settings.truth_trajectories.unwrap_or(400_000),
        truth_blocks: settings.truth_blocks.unwrap_or(20),
    };
    if !(resolved.level > 0.0 && resolved.level < 1.0) {
        return Err(CliError::invalid(format!(
            "interval level must lie in (0, 1); got {}",
            resolved.level
        )));
    }

    let bank = GlmBank::synthetic_default();
    let transform = match resolved.scenario {
        Scenario::Correct => Transform::Identity,
        Scenario::Misspecified => Transform::default_misspecified(),
    };
    let spec = DgpSpec {
        bank,
        transform,
        baseline_source: synthetic_baselines(1000, resolved.seed),
        sample_size: resolved.sample_size,
        num_replicates: resolved.replicates,
        rng_seed: resolved.seed,
    };
    spec.validate()?;
    let regimes = RegimePair::always_versus_never(spec.bank.num_visits());

    super::ensure_dir(&out_dir)?;
    let truth_key = TruthKey {
        scenario: resolved.scenario,
        seed: resolved.seed,
        truth_trajectories: resolved.truth_trajectories,
        truth_blocks: resolved.truth_blocks,
        regimes: &regimes,
    };
    let truth_hash = config_hash(&truth_key)?;
    let truth_path = out_dir.join("truth.json");
    let cached = std::fs::read_to_string(&truth_path)
        .ok()
        .and_then(|text| serde_json::from_str::<TruthCache>(&text).ok())
        .filter(|cache| cache.config_hash == truth_hash);
    let truth = match cached {
        Some(cache) => {
            eprintln!("reusing the cached ground truth at {}", truth_path.display());
            cache.truth
        }
        None => {
            let truth = true_effects(
                &spec,
                &regimes,
                resolved.truth_trajectories,
                resolved.truth_blocks,
            )?;
            let cache = TruthCache { config_hash: truth_hash, truth };
            let mut json = serde_json::to_string_pretty(&cache)
                .map_err(|e| CliError::invalid(format!("cannot encode the truth cache: {e}")))?;
            json.push('\n');
            write_text(&truth_path, &json, None)?;
            cache.truth
        }
    };

    let mut bank_config = BankConfig::default();
    bank_config.continuous.num_burn = resolved.burn;
    bank_config.continuous.num_keep = resolved.keep;
    bank_config.probit.num_burn = resolved.burn;
    bank_config.probit.num_keep = resolved.keep;
    bank_config.validate()?;
    let bart = BartEstimator { bank_config, num_trajectories: resolved.c_star };
    let glm = GlmPluginEstimator {
        num_bootstrap: resolved.glm_bootstrap,
        num_trajectories: resolved.c_star,
    };
    let estimators: Vec<&dyn EffectEstimator> = resolved
        .estimators
        .iter()
        .map(|kind| match kind {
            EstimatorKind::Bart => &bart as &dyn EffectEstimator,
            EstimatorKind::Glm => &glm as &dyn EffectEstimator,
        })
        .collect();

    let study = StudyConfig {
        scenario: resolved.scenario.label().to_string(),
        regimes: regimes.clone(),
        level: resolved.level,
        visits: None,
    };
    let sim_report = run_study(&spec, &estimators, &truth, &study)?;

    let mut manifest = Manifest::new("simulate", resolved.seed, config_hash(&resolved)?);
    write_text(&out_dir.join("sim.csv"), &report::sim_csv(&sim_report), Some(&mut manifest))?;
    write_text(&out_dir.join("sim.json"), &report::sim_json(&sim_report)?, Some(&mut manifest))?;
    write_text(&out_dir.join("sim.txt"), &report::sim_table(&sim_report), Some(&mut manifest))?;
    write_text(&out_dir.join("truth.csv"), &report::truth_csv(&truth), Some(&mut manifest))?;
    manifest.output_file(&truth_path)?;
    manifest.write(&out_dir)?;

    print!("{}", report::sim_table(&sim_report));
    println!("reports written to {}", out_dir.display());
    Ok(())
}
