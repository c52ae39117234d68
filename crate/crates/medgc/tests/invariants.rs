//! Property tests for the summary-statistics layer: quantiles, intervals,
//! bootstrap picks, and the per-sample additivity of the three estimands.

use proptest::prelude::*;

use medgc::data::Mode;
use medgc::gcomp::{
    bayesian_bootstrap, effects, equal_tailed_interval, quantile_type7, ArmCurves, Estimand,
    GcompPosterior, RegimePair,
};
use medgc::streams::stream;

fn sorted_samples() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0e3..1.0e3f64, 1..40).prop_map(|mut v| {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn quantiles_stay_inside_the_sample_range_and_rise_with_p(
        sorted in sorted_samples(),
        p_low in 0.0..=1.0f64,
        p_high in 0.0..=1.0f64,
    ) {
        let (p1, p2) = if p_low <= p_high { (p_low, p_high) } else { (p_high, p_low) };
        let q1 = quantile_type7(&sorted, p1);
        let q2 = quantile_type7(&sorted, p2);
        let min = sorted[0];
        let max = sorted[sorted.len() - 1];
        prop_assert!(q1 >= min && q1 <= max, "quantile {q1} outside [{min}, {max}]");
        prop_assert!(q2 >= min && q2 <= max);
        prop_assert!(q1 <= q2, "type-7 quantiles must be monotone in p: {q1} > {q2}");
        prop_assert_eq!(quantile_type7(&sorted, 0.0), min);
        prop_assert_eq!(quantile_type7(&sorted, 1.0), max);
    }

    #[test]
    fn narrower_levels_give_nested_equal_tailed_intervals(
        samples in prop::collection::vec(-50.0..50.0f64, 2..60),
        level_inner in 0.05..0.90f64,
        widen in 0.01..0.099f64,
    ) {
        let level_outer = level_inner + widen;
        let (inner_low, inner_high) = equal_tailed_interval(&samples, level_inner);
        let (outer_low, outer_high) = equal_tailed_interval(&samples, level_outer);
        prop_assert!(inner_low <= inner_high);
        prop_assert!(outer_low <= inner_low, "{outer_low} > {inner_low}");
        prop_assert!(outer_high >= inner_high, "{outer_high} < {inner_high}");
    }

    #[test]
    fn bootstrap_picks_are_in_range_and_reproducible(
        num_baselines in 1usize..20,
        num_picks in 0usize..50,
        seed in any::<u64>(),
    ) {
        let picks = bayesian_bootstrap(num_baselines, num_picks, &mut stream(&[seed])).unwrap();
        prop_assert_eq!(picks.len(), num_picks);
        prop_assert!(picks.iter().all(|&i| i < num_baselines));
        let again = bayesian_bootstrap(num_baselines, num_picks, &mut stream(&[seed])).unwrap();
        prop_assert_eq!(picks, again);
        if num_baselines == 1 {
            let single = bayesian_bootstrap(1, num_picks, &mut stream(&[seed])).unwrap();
            prop_assert!(single.iter().all(|&i| i == 0), "one baseline leaves no choice");
        }
    }

    #[test]
    fn total_effects_are_the_exact_per_sample_sums_for_any_curves(
        flat in prop::collection::vec(0.0..=1.0f64, 3 * 2 * 3),
        num_visits in 2usize..4,
    ) {
        // Three arms of [num_draws = 2][num_visits] survival curves, carved
        // out of one flat random vector (extra entries ignored).
        let num_draws = 2;
        let arms: Vec<ArmCurves> = (0..3)
            .map(|a| {
                let survival: Vec<Vec<f64>> = (0..num_draws)
                    .map(|q| {
                        (0..num_visits)
                            .map(|h| flat[(a * num_draws + q) * 3 + h.min(2)])
                            .collect()
                    })
                    .collect();
                ArmCurves {
                    hazard_main: survival.clone(),
                    hazard_competing: None,
                    survival,
                    cif_main: None,
                    cif_competing: None,
                }
            })
            .collect();
        let posterior = GcompPosterior {
            mode: Mode::Single,
            visit_grid: (1..=num_visits).map(|j| j as f64).collect(),
            regimes: RegimePair::always_versus_never(num_visits),
            num_draws,
            arms,
        };
        let summary = effects(&posterior, 0.9).unwrap();
        // One row triple per visit 2..=J, in (IDE, IIE, TE) order.
        prop_assert_eq!(summary.rows.len(), 3 * (num_visits - 1));
        for visit in 2..=num_visits {
            let ide = summary.row(visit, None, Estimand::DirectEffect).unwrap();
            let iie = summary.row(visit, None, Estimand::IndirectEffect).unwrap();
            let te = summary.row(visit, None, Estimand::TotalEffect).unwrap();
            for q in 0..num_draws {
                let sum = ide.samples[q] + iie.samples[q];
                prop_assert!(
                    te.samples[q] == sum,
                    "TE sample must equal IDE + IIE bit for bit: {} vs {sum}",
                    te.samples[q]
                );
            }
            prop_assert!(ide.lower <= ide.upper && te.lower <= te.upper);
        }
    }
}
