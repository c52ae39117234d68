//! Determinism, serialization, and posterior-calibration contracts.

use bart::{fit_continuous, BartConfig, DesignMatrix, FittedBart};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;

fn toy_data(seed: u64, n: usize) -> (DesignMatrix, Vec<f64>) {
    let mut rng: ChaCha8Rng = rand::SeedableRng::seed_from_u64(seed);
    let xs: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
    let y: Vec<f64> = xs.iter().map(|&u| (6.0 * u).sin() + 0.3 * rng.gen::<f64>()).collect();
    (DesignMatrix::new(xs, n, 1).unwrap(), y)
}

fn lean_config(seed: u64) -> BartConfig {
    BartConfig { num_trees: 25, num_burn: 150, num_keep: 100, ..BartConfig::default_continuous() }
        .with_seed(seed)
}

#[test]
fn same_seed_gives_bit_identical_fits() {
    let (x, y) = toy_data(3, 80);
    let fit_a = fit_continuous(&x, &y, &lean_config(42)).unwrap();
    let fit_b = fit_continuous(&x, &y, &lean_config(42)).unwrap();
    assert_eq!(fit_a, fit_b);
    assert_eq!(fit_a.to_json().unwrap(), fit_b.to_json().unwrap());
    for q in (0..fit_a.num_draws()).step_by(17) {
        let pa = fit_a.predict(q, &[0.37]).unwrap();
        let pb = fit_b.predict(q, &[0.37]).unwrap();
        assert_eq!(pa.to_bits(), pb.to_bits());
    }
}

#[test]
fn different_seeds_give_different_fits() {
    let (x, y) = toy_data(3, 80);
    let fit_a = fit_continuous(&x, &y, &lean_config(42)).unwrap();
    let fit_b = fit_continuous(&x, &y, &lean_config(43)).unwrap();
    assert_ne!(fit_a, fit_b);
}

#[test]
fn fitted_model_survives_a_file_round_trip() {
    let (x, y) = toy_data(5, 60);
    let fit = fit_continuous(&x, &y, &lean_config(7)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    fit.save(&path).unwrap();
    let restored = FittedBart::load(&path).unwrap();
    assert_eq!(fit, restored);
    for q in 0..fit.num_draws() {
        for &u in &[0.0, 0.25, 0.5, 0.75, 1.0] {
            let a = fit.predict(q, &[u]).unwrap();
            let b = restored.predict(q, &[u]).unwrap();
            assert_eq!(a.to_bits(), b.to_bits(), "draw {q} at {u}");
        }
    }
}

#[test]
fn prediction_is_pure_across_repeated_calls() {
    let (x, y) = toy_data(11, 40);
    let fit = fit_continuous(&x, &y, &lean_config(13)).unwrap();
    let first = fit.predict(5, &[0.61]).unwrap();
    for _ in 0..100 {
        assert_eq!(fit.predict(5, &[0.61]).unwrap().to_bits(), first.to_bits());
    }
}

/// Posterior σ interval calibration on pure noise around a flat mean: the 95%
/// equal-tailed interval should cover the generating σ in at least 45 of 50
/// seeded repetitions.
#[test]
fn sigma_interval_covers_known_noise_level() {
    let sigma_true = 2.0;
    let mut covered = 0;
    for rep in 0..50u64 {
        let mut rng: ChaCha8Rng = rand::SeedableRng::seed_from_u64(1000 + rep);
        let n = 400;
        let xs: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let noise = rand_distr::Normal::new(0.0, sigma_true).unwrap();
        let y: Vec<f64> = (0..n).map(|_| 3.0 + noise.sample(&mut rng)).collect();
        let x = DesignMatrix::new(xs, n, 1).unwrap();
        let config = BartConfig {
            num_trees: 20,
            num_burn: 300,
            num_keep: 300,
            ..BartConfig::default_continuous()
        }
        .with_seed(rep);
        let fit = fit_continuous(&x, &y, &config).unwrap();
        let mut sigmas: Vec<f64> = fit.draws.iter().map(|d| d.sigma.unwrap()).collect();
        sigmas.sort_by(f64::total_cmp);
        let lo = sigmas[(0.025 * sigmas.len() as f64) as usize];
        let hi = sigmas[((0.975 * sigmas.len() as f64) as usize).min(sigmas.len() - 1)];
        if (lo..=hi).contains(&sigma_true) {
            covered += 1;
        }
    }
    assert!(covered >= 45, "sigma interval covered the truth in only {covered}/50 repetitions");
}
