//! Property test: every accepted and rejected move preserves tree validity.

use bart::{sample_tree_move, BartConfig, CutpointGrid, DecisionTree, DesignMatrix, TreeData};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn random_move_sequences_preserve_validity(
        n in 4usize..32,
        p in 1usize..4,
        seed in any::<u64>(),
        num_moves in 1usize..150,
        values in prop::collection::vec(-1.0f64..1.0, 4 * 32 * 3),
    ) {
        let data_vals: Vec<f64> = values.iter().cloned().cycle().take(n * p).collect();
        let x = DesignMatrix::new(data_vals, n, p).unwrap();
        let grids = CutpointGrid::from_design(&x, 12);
        let data = TreeData { x: &x, grids: &grids };
        // Deterministic pseudo-residuals derived from the rows.
        let residuals: Vec<f64> =
            (0..n).map(|i| x.row(i).iter().sum::<f64>().sin()).collect();
        let config = BartConfig::default_continuous();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tree = DecisionTree::stump(0.0);
        for _ in 0..num_moves {
            sample_tree_move(&mut tree, &data, &residuals, 0.8, &config, &mut rng);
            prop_assert!(tree.is_structurally_valid());
            // Every training row routes to exactly one leaf.
            let routing = tree.route_rows(&x);
            prop_assert_eq!(routing.len(), n);
            for &node in &routing {
                prop_assert!(tree.nodes[node].is_leaf());
            }
        }
    }
}
