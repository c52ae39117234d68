//! Backfitting Gibbs samplers for the continuous and probit variants.
//!
//! Both fits run the same Metropolis-within-Gibbs loop: each sweep visits
//! every tree in turn, forms that tree's partial residuals (response minus the
//! other trees' fits), proposes one structural move, and redraws leaf values;
//! the continuous fit then updates σ² from its scaled-inverse-χ² full
//! conditional, while the probit fit instead refreshes truncated-normal
//! latents (Albert–Chib augmentation) at the top of each sweep.
//!
//! A fit consumes exactly one random stream derived from `config.rng_seed`;
//! callers running several fits concurrently should derive one distinct seed
//! per model identifier (see [`crate::rng::stream`]), which keeps results
//! bit-for-bit reproducible regardless of scheduling.

use rand::Rng;
use rand_distr::Distribution;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::config::BartConfig;
use crate::data::{CutpointGrid, DesignMatrix};
use crate::model::{EnsembleDraw, FittedBart, ModelKind};
use crate::moves::{sample_tree_move, TreeData};
use crate::tree::DecisionTree;
use crate::{normal_quantile, rng, BartError, Result};

/// Fits the continuous-response model `y = g(x) + ε`, `ε ~ N(0, σ²)`.
///
/// The response is standardized to `[-0.5, 0.5]` internally; every kept draw
/// records the offset/scale pair so predictions de-standardize themselves.
/// Constant responses are permitted (the fit degenerates gracefully: trees
/// stay near stumps and σ shrinks below its prior median).
pub fn fit_continuous(x: &DesignMatrix, y: &[f64], config: &BartConfig) -> Result<FittedBart> {
    config.validate()?;
    let n = x.num_rows();
    if y.len() != n {
        return Err(BartError::InvalidInput(format!(
            "y has {} entries but X has {n} rows",
            y.len()
        )));
    }
    if n < 2 {
        return Err(BartError::InvalidInput(format!("need at least 2 rows, got {n}")));
    }
    if let Some(bad) = y.iter().find(|v| !v.is_finite()) {
        return Err(BartError::InvalidInput(format!("y contains non-finite value {bad}")));
    }

    // Standardize y to [-0.5, 0.5]; a constant response maps to all zeros.
    let y_min = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let y_max = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let offset = 0.5 * (y_min + y_max);
    let scale = if y_max > y_min { y_max - y_min } else { 1.0 };
    let y_std: Vec<f64> = y.iter().map(|&v| (v - offset) / scale).collect();

    // λ calibrated so P(σ < σ̂) = q under σ² ~ ν λ / χ²_ν, with σ̂ the
    // standardized response standard deviation (floored for constant y so the
    // prior stays proper).
    let mean = y_std.iter().sum::<f64>() / n as f64;
    let var = y_std.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    let sigma_hat = var.sqrt().max(1e-3);
    let chi2_nu = ChiSquared::new(config.nu).expect("nu validated positive");
    let lambda = sigma_hat * sigma_hat * chi2_nu.inverse_cdf(1.0 - config.q) / config.nu;

    let grids = CutpointGrid::from_design(x, config.num_cutpoints);
    let data = TreeData { x, grids: &grids };
    let mut rng = rng::stream(&[config.rng_seed]);

    let mut trees = vec![DecisionTree::stump(0.0); config.num_trees];
    let mut preds = vec![vec![0.0f64; n]; config.num_trees];
    let mut total = vec![0.0f64; n];
    let mut residual = vec![0.0f64; n];
    let mut sigma_std = sigma_hat;

    let total_sweeps = config.num_burn + config.num_keep * config.thinning;
    let mut draws = Vec::with_capacity(config.num_keep);
    for sweep in 0..total_sweeps {
        for r in 0..config.num_trees {
            for i in 0..n {
                residual[i] = y_std[i] - (total[i] - preds[r][i]);
            }
            sample_tree_move(&mut trees[r], &data, &residual, sigma_std, config, &mut rng);
            for i in 0..n {
                let p = trees[r].predict_row(x.row(i));
                total[i] += p - preds[r][i];
                preds[r][i] = p;
            }
        }
        // σ² | rest ~ scaled-inverse-χ²: (ν λ + SSE) / χ²_{ν+n}.
        let sse: f64 = (0..n).map(|i| (y_std[i] - total[i]) * (y_std[i] - total[i])).sum();
        let dof = config.nu + n as f64;
        let chi2: f64 = rand_distr::Gamma::new(dof / 2.0, 2.0)
            .expect("positive dof")
            .sample(&mut rng);
        sigma_std = ((config.nu * lambda + sse) / chi2).sqrt();

        #[cfg(debug_assertions)]
        if sweep % 200 == 0 {
            assert_backfit_consistent(&trees, x, &total);
        }

        if sweep >= config.num_burn && (sweep - config.num_burn) % config.thinning == config.thinning - 1
        {
            draws.push(EnsembleDraw {
                trees: trees.clone(),
                sigma: Some(scale * sigma_std),
                response_offset: offset,
                response_scale: scale,
            });
        }
    }

    Ok(FittedBart::from_parts(ModelKind::Continuous, config.clone(), x.num_cols(), draws))
}

/// Fits the probit model `P(y = 1 | x) = Φ(offset + g(x))` by latent
/// truncated-normal data augmentation: each sweep first redraws the latents
/// `z_i ~ N(offset + g(x_i), 1)` truncated to the side implied by `y_i`, then
/// runs the tree moves against `z - offset` with unit error variance.
///
/// Single-class responses are permitted; the fit shrinks toward the
/// prior-tempered intercept `Φ⁻¹(mean(y))` clamped to `[-2, 2]`.
pub fn fit_probit(x: &DesignMatrix, y: &[f64], config: &BartConfig) -> Result<FittedBart> {
    config.validate()?;
    let n = x.num_rows();
    if y.len() != n {
        return Err(BartError::InvalidInput(format!(
            "y has {} entries but X has {n} rows",
            y.len()
        )));
    }
    if n == 0 {
        return Err(BartError::InvalidInput("need at least 1 row".into()));
    }
    if let Some(bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(BartError::InvalidInput(format!(
            "binary response must be 0 or 1, got {bad}"
        )));
    }

    // Latent intercept anchored at the response rate; the clamp keeps
    // single-class fits proper.
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let offset = normal_quantile(mean_y.clamp(1e-12, 1.0 - 1e-12)).clamp(-2.0, 2.0);

    // Latent scale is fixed at 1, so the leaf prior uses 3/(k√R) unless the
    // caller overrode it.
    let leaf_sd = config
        .leaf_sd_override
        .unwrap_or_else(|| 3.0 / (config.k * (config.num_trees as f64).sqrt()));
    let config_eff = BartConfig { leaf_sd_override: Some(leaf_sd), ..config.clone() };

    let grids = CutpointGrid::from_design(x, config.num_cutpoints);
    let data = TreeData { x, grids: &grids };
    let mut rng = rng::stream(&[config.rng_seed]);

    let mut trees = vec![DecisionTree::stump(0.0); config.num_trees];
    let mut preds = vec![vec![0.0f64; n]; config.num_trees];
    let mut total = vec![0.0f64; n];
    let mut latent = vec![0.0f64; n]; // z_i - offset, the tree-model response
    let mut residual = vec![0.0f64; n];

    let total_sweeps = config.num_burn + config.num_keep * config.thinning;
    let mut draws = Vec::with_capacity(config.num_keep);
    for sweep in 0..total_sweeps {
        for i in 0..n {
            let mu = offset + total[i];
            let z = if y[i] == 1.0 {
                sample_truncated_normal_lower(mu, 0.0, &mut rng)
            } else {
                -sample_truncated_normal_lower(-mu, 0.0, &mut rng)
            };
            latent[i] = z - offset;
        }
        for r in 0..config.num_trees {
            for i in 0..n {
                residual[i] = latent[i] - (total[i] - preds[r][i]);
            }
            sample_tree_move(&mut trees[r], &data, &residual, 1.0, &config_eff, &mut rng);
            for i in 0..n {
                let p = trees[r].predict_row(x.row(i));
                total[i] += p - preds[r][i];
                preds[r][i] = p;
            }
        }

        #[cfg(debug_assertions)]
        if sweep % 200 == 0 {
            assert_backfit_consistent(&trees, x, &total);
        }

        if sweep >= config.num_burn && (sweep - config.num_burn) % config.thinning == config.thinning - 1
        {
            draws.push(EnsembleDraw {
                trees: trees.clone(),
                sigma: None,
                response_offset: offset,
                response_scale: 1.0,
            });
        }
    }

    Ok(FittedBart::from_parts(ModelKind::Probit, config.clone(), x.num_cols(), draws))
}

/// Draws from N(`mean`, 1) truncated to `(lower, ∞)`.
///
/// Uses plain rejection when the truncation point sits at or below the mean
/// and the shifted-exponential rejection sampler of Robert (1995) for far
/// tails, so acceptance stays bounded away from zero everywhere.
pub fn sample_truncated_normal_lower(mean: f64, lower: f64, rng: &mut impl Rng) -> f64 {
    let a = lower - mean; // truncation point in standard units
    if a <= 0.0 {
        // At least half the mass is retained: rejection from the plain normal.
        loop {
            let z: f64 = rng.sample(rand_distr::StandardNormal);
            if z >= a {
                return mean + z;
            }
        }
    }
    // Tail case: proposal z = a + Exp(α) with the optimal rate α.
    let alpha = 0.5 * (a + (a * a + 4.0).sqrt());
    loop {
        let e: f64 = rng.sample(rand_distr::Exp::new(alpha).expect("alpha > 0"));
        let z = a + e;
        let accept_log = -0.5 * (z - alpha) * (z - alpha);
        if rng.gen::<f64>().ln() < accept_log {
            return mean + z;
        }
    }
}

/// Debug check: the running `total` equals the sum of per-tree predictions.
#[cfg(debug_assertions)]
fn assert_backfit_consistent(trees: &[DecisionTree], x: &DesignMatrix, total: &[f64]) {
    for i in 0..x.num_rows() {
        let direct: f64 = trees.iter().map(|t| t.predict_row(x.row(i))).sum();
        assert!(
            (direct - total[i]).abs() < 1e-8 * (1.0 + direct.abs()),
            "backfitting drift at row {i}: cached {} vs direct {direct}",
            total[i]
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_config(seed: u64) -> BartConfig {
        BartConfig {
            num_trees: 20,
            num_burn: 100,
            num_keep: 100,
            ..BartConfig::default_continuous()
        }
        .with_seed(seed)
    }

    #[test]
    fn constant_response_recovers_the_constant() {
        let n = 50;
        let x = DesignMatrix::new((0..n).map(|i| i as f64 / n as f64).collect(), n, 1).unwrap();
        let y = vec![5.0; n];
        let fit = fit_continuous(&x, &y, &small_config(11)).unwrap();
        for i in 0..n {
            let pred = fit.predict_mean(x.row(i)).unwrap();
            assert!((4.9..=5.1).contains(&pred), "prediction {pred} at row {i}");
        }
        // σ concentrates below the prior median: the prior median equals
        // sqrt(ν λ / median(χ²_ν)) with σ̂ floored at 1e-3 × scale 1.
        let sigma_mean: f64 = fit.draws.iter().map(|d| d.sigma.unwrap()).sum::<f64>()
            / fit.num_draws() as f64;
        let chi2 = ChiSquared::new(3.0).unwrap();
        let lambda = 1e-6 * chi2.inverse_cdf(0.10) / 3.0;
        let prior_median_sigma = (3.0 * lambda / chi2.inverse_cdf(0.5)).sqrt();
        assert!(
            sigma_mean < prior_median_sigma,
            "posterior sigma {sigma_mean} should sit below prior median {prior_median_sigma}"
        );
    }

    #[test]
    fn noiseless_linear_signal_is_recovered() {
        let n = 200;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let x = DesignMatrix::new(u.clone(), n, 1).unwrap();
        let config = BartConfig {
            num_trees: 50,
            num_burn: 500,
            num_keep: 200,
            ..BartConfig::default_continuous()
        }
        .with_seed(17);
        let fit = fit_continuous(&x, &u, &config).unwrap();
        let mse: f64 = (0..n)
            .map(|i| {
                let p = fit.predict_mean(x.row(i)).unwrap();
                (p - u[i]) * (p - u[i])
            })
            .sum::<f64>()
            / n as f64;
        assert!(mse.sqrt() < 0.05, "training RMSE {} too large", mse.sqrt());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let x = DesignMatrix::new(vec![0.0, 1.0, 2.0], 3, 1).unwrap();
        assert!(fit_continuous(&x, &[1.0, 2.0], &small_config(1)).is_err());
        assert!(fit_probit(&x, &[1.0, 0.0], &small_config(1)).is_err());
    }

    #[test]
    fn non_binary_probit_response_is_rejected() {
        let x = DesignMatrix::new(vec![0.0, 1.0, 2.0], 3, 1).unwrap();
        let err = fit_probit(&x, &[0.0, 0.5, 1.0], &small_config(1)).unwrap_err();
        assert!(err.to_string().contains("0 or 1"));
    }

    #[test]
    fn zero_keep_is_rejected() {
        let x = DesignMatrix::new(vec![0.0, 1.0], 2, 1).unwrap();
        let config = BartConfig { num_keep: 0, ..small_config(1) };
        assert!(fit_continuous(&x, &[0.0, 1.0], &config).is_err());
    }

    #[test]
    fn all_zero_probit_response_shrinks_toward_zero() {
        let n = 50;
        let x = DesignMatrix::new((0..n).map(|i| i as f64 / n as f64).collect(), n, 1).unwrap();
        let y = vec![0.0; n];
        let config = BartConfig {
            num_trees: 20,
            num_burn: 100,
            num_keep: 100,
            ..BartConfig::default_probit()
        }
        .with_seed(23);
        let fit = fit_probit(&x, &y, &config).unwrap();
        for i in 0..n {
            let p = fit.predict_mean(x.row(i)).unwrap();
            assert!(p < 0.15, "probability {p} at row {i} should shrink toward zero");
        }
    }

    #[test]
    fn truncated_normal_respects_the_bound_and_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        // Far-tail case exercises the exponential-rejection branch.
        let draws: Vec<f64> =
            (0..20_000).map(|_| sample_truncated_normal_lower(0.0, 4.0, &mut rng)).collect();
        assert!(draws.iter().all(|&z| z >= 4.0));
        // E[Z | Z > a] = φ(a)/(1-Φ(a)); at a = 4 this is ≈ 4.2224.
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 4.2224).abs() < 0.01, "tail mean {mean}");

        // Easy case: half-truncated standard normal has mean φ(0)/0.5 = 0.7979.
        let draws: Vec<f64> =
            (0..20_000).map(|_| sample_truncated_normal_lower(0.0, 0.0, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 0.7979).abs() < 0.02, "half-normal mean {mean}");
    }
}
