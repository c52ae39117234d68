//! Prior-recovery check for the structural move sampler.
//!
//! With zero training rows every integrated-likelihood ratio is exactly one,
//! so the Metropolis–Hastings chain over tree structures targets the tree
//! prior itself. Long-run samples from the chain must then match direct
//! simulation from the prior — the oracle — on summary statistics of the
//! structure. Mismatch would expose an error in the acceptance ratios
//! (proposal counts, depth-prior factors, or availability bookkeeping).

use bart::{
    sample_tree_from_prior, sample_tree_move, BartConfig, CutpointGrid, DecisionTree,
    DesignMatrix, TreeData,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Number of leaves, capped into the final histogram bin.
fn leaf_count_bin(tree: &DecisionTree, max_bin: usize) -> usize {
    tree.leaf_indices().len().min(max_bin)
}

/// Maximum leaf depth, capped.
fn max_depth_bin(tree: &DecisionTree, max_bin: usize) -> usize {
    let depths = tree.node_depths();
    tree.leaf_indices()
        .into_iter()
        .map(|l| depths[l])
        .max()
        .unwrap_or(0)
        .min(max_bin)
}

/// Pearson χ² statistic of observed counts against oracle probabilities,
/// merging trailing sparse bins so every expected count is ≥ 5.
fn chi_square(observed: &[u64], oracle_probs: &[f64]) -> (f64, usize) {
    let n: u64 = observed.iter().sum();
    let mut merged_obs: Vec<f64> = Vec::new();
    let mut merged_exp: Vec<f64> = Vec::new();
    let mut acc_obs = 0.0;
    let mut acc_exp = 0.0;
    for (o, p) in observed.iter().zip(oracle_probs) {
        acc_obs += *o as f64;
        acc_exp += p * n as f64;
        if acc_exp >= 5.0 {
            merged_obs.push(acc_obs);
            merged_exp.push(acc_exp);
            acc_obs = 0.0;
            acc_exp = 0.0;
        }
    }
    if acc_exp > 0.0 {
        // Fold any remainder into the last kept bin.
        let last = merged_obs.len() - 1;
        merged_obs[last] += acc_obs;
        merged_exp[last] += acc_exp;
    }
    let stat: f64 = merged_obs
        .iter()
        .zip(&merged_exp)
        .map(|(o, e)| (o - e) * (o - e) / e)
        .sum();
    (stat, merged_obs.len() - 1)
}

/// Upper 1% critical values of χ²_k for the dof this test can produce.
fn chi2_crit_1pct(dof: usize) -> f64 {
    const TABLE: [f64; 12] = [
        6.635, 9.210, 11.345, 13.277, 15.086, 16.812, 18.475, 20.090, 21.666, 23.209, 24.725,
        26.217,
    ];
    TABLE[dof - 1]
}

#[test]
fn flat_likelihood_chain_matches_direct_prior_simulation() {
    // One continuous covariate with a 100-point grid: availability depletion
    // is negligible at the depths the prior reaches, and the chain mixes fast.
    let x = DesignMatrix::new(vec![], 0, 1).unwrap();
    let grids = CutpointGrid::from_cuts(vec![(1..=100).map(|i| i as f64 / 101.0).collect()]);
    let data = TreeData { x: &x, grids: &grids };
    let config = BartConfig::default_continuous().with_seed(314);

    // Oracle: direct simulation from the prior (large sample, cheap).
    const MAX_LEAF_BIN: usize = 8;
    const MAX_DEPTH_BIN: usize = 5;
    let mut oracle_leaves = vec![0u64; MAX_LEAF_BIN + 1];
    let mut oracle_depths = vec![0u64; MAX_DEPTH_BIN + 1];
    let oracle_n = 400_000u64;
    let mut rng = ChaCha8Rng::seed_from_u64(2_718);
    for _ in 0..oracle_n {
        let tree = sample_tree_from_prior(&grids, &config, &mut rng);
        oracle_leaves[leaf_count_bin(&tree, MAX_LEAF_BIN)] += 1;
        oracle_depths[max_depth_bin(&tree, MAX_DEPTH_BIN)] += 1;
    }
    let leaf_probs: Vec<f64> =
        oracle_leaves.iter().map(|&c| c as f64 / oracle_n as f64).collect();
    let depth_probs: Vec<f64> =
        oracle_depths.iter().map(|&c| c as f64 / oracle_n as f64).collect();

    // Chain: 10,000 kept samples, thinned to damp autocorrelation.
    let mut tree = DecisionTree::stump(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1_618);
    let residuals: Vec<f64> = vec![];
    let thin = 25;
    let kept = 10_000;
    // Burn-in.
    for _ in 0..2_000 {
        sample_tree_move(&mut tree, &data, &residuals, 1.0, &config, &mut rng);
    }
    let mut chain_leaves = vec![0u64; MAX_LEAF_BIN + 1];
    let mut chain_depths = vec![0u64; MAX_DEPTH_BIN + 1];
    for _ in 0..kept {
        for _ in 0..thin {
            sample_tree_move(&mut tree, &data, &residuals, 1.0, &config, &mut rng);
        }
        chain_leaves[leaf_count_bin(&tree, MAX_LEAF_BIN)] += 1;
        chain_depths[max_depth_bin(&tree, MAX_DEPTH_BIN)] += 1;
    }

    let (stat_leaves, dof_leaves) = chi_square(&chain_leaves, &leaf_probs);
    let crit_leaves = chi2_crit_1pct(dof_leaves);
    assert!(
        stat_leaves < crit_leaves,
        "leaf-count χ² = {stat_leaves:.2} exceeds 1% critical value {crit_leaves:.2} \
         (dof {dof_leaves}); chain {chain_leaves:?} vs oracle {oracle_leaves:?}"
    );

    let (stat_depths, dof_depths) = chi_square(&chain_depths, &depth_probs);
    let crit_depths = chi2_crit_1pct(dof_depths);
    assert!(
        stat_depths < crit_depths,
        "max-depth χ² = {stat_depths:.2} exceeds 1% critical value {crit_depths:.2} \
         (dof {dof_depths}); chain {chain_depths:?} vs oracle {oracle_depths:?}"
    );
}

#[test]
fn flat_likelihood_chain_matches_analytic_single_split_odds() {
    // With alpha = 0.95, beta = 2 the prior probability that the root stays a
    // stump is 1 − 0.95 = 0.05... conditioned against deeper shapes this is
    // awkward analytically, so check the simplest exact ratio instead:
    // P(stump) against its direct-simulation estimate.
    let grids = CutpointGrid::from_cuts(vec![(1..=100).map(|i| i as f64 / 101.0).collect()]);
    let config = BartConfig::default_continuous();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 200_000;
    let stumps = (0..n)
        .filter(|_| sample_tree_from_prior(&grids, &config, &mut rng).num_nodes() == 1)
        .count();
    let p_hat = stumps as f64 / n as f64;
    assert!(
        (p_hat - 0.05).abs() < 0.002,
        "oracle stump rate {p_hat} should match 1 - alpha = 0.05"
    );
}
