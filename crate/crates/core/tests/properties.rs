use std::collections::BTreeMap;
use std::sync::Arc;

use cat_anova::oracle::{check_hierarchical_orthogonality, DeviationScale};
use cat_anova::synthetic;
use cat_anova::{
    decompose, greedy_select, index_space_size, enumerate_indices, Distribution64, HyperGrid, OrderingStrategy,
    SelectionConfig64, Subset,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random sparse instance: cardinalities, coverage and a seed for the rest.
fn instance() -> impl Strategy<Value = (Vec<u32>, f64, u64)> {
    (prop::collection::vec(2u32..=3, 1..=4), 0.3f64..=1.0, any::<u64>())
}

fn build(cards: &[u32], coverage: f64, seed: u64) -> (Arc<Distribution64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = synthetic::random_sparse::<f64, _>(&mut rng, cards, coverage).unwrap();
    let f = synthetic::random_function(&mut rng, dist.support_size());
    (Arc::new(dist), f)
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-9 * scale.max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn components_are_hierarchically_orthogonal((cards, coverage, seed) in instance()) {
        let (dist, f) = build(&cards, coverage, seed);
        let dec = decompose(&dist, &f, &SelectionConfig64::full(cards.len())).unwrap();
        let report = check_hierarchical_orthogonality(
            &dist,
            &dec.components_with_intercept(),
            1e-10,
            DeviationScale::Relative,
        );
        prop_assert!(report.pass, "{:?}", report.details);
    }

    #[test]
    fn full_rank_reconstructs_and_is_efficient((cards, coverage, seed) in instance()) {
        let (dist, f) = build(&cards, coverage, seed);
        let dec = decompose(&dist, &f, &SelectionConfig64::full(cards.len())).unwrap();
        prop_assert_eq!(dec.selection().achieved_rank, dist.support_size());
        for (k, (&a, &b)) in dec.fitted().iter().zip(&f).enumerate() {
            prop_assert!((a - b).abs() < 1e-8);
            prop_assert!(dec.shapley_row(k).efficiency_gap().abs() < 1e-10);
        }
    }

    #[test]
    fn selection_ignores_the_target((cards, coverage, seed) in instance()) {
        let (dist, _) = build(&cards, coverage, seed);
        let config = SelectionConfig64::full(cards.len());
        let a = greedy_select(&dist, &config).unwrap();
        let b = greedy_select(&dist, &config).unwrap();
        prop_assert_eq!(a, b);
        let g = vec![0.0; dist.support_size()];
        let dec = decompose(&dist, &g, &config).unwrap();
        prop_assert_eq!(&dec.selection().keys, &greedy_select(&dist, &config).unwrap().keys);
    }

    #[test]
    fn decomposition_is_linear_in_the_target(
        (cards, coverage, seed) in instance(),
        alpha in -3.0f64..3.0,
        shift in -2.0f64..2.0,
    ) {
        let (dist, f) = build(&cards, coverage, seed);
        let config = SelectionConfig64::full(cards.len());
        let base = decompose(&dist, &f, &config).unwrap();
        let g: Vec<f64> = f.iter().map(|v| alpha * v + shift).collect();
        let scaled = decompose(&dist, &g, &config).unwrap();
        let scale = base.components().values().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
        prop_assert!(close(scaled.intercept(), alpha * base.intercept() + shift, scale));
        for (subset, values) in base.components() {
            let other = scaled.component(subset).unwrap();
            for (a, b) in values.iter().zip(other) {
                prop_assert!(close(*b, alpha * a, scale * alpha.abs()));
            }
        }
    }

    #[test]
    fn relabeling_features_permutes_components((cards, _, seed) in instance()) {
        // full support only: on a sparse support the greedy order decides
        // which interaction keys survive, so labels matter there
        let (dist, f) = build(&cards, 1.0, seed);
        let d = cards.len();
        // reverse feature order
        let rows: Vec<Vec<u32>> = dist.rows().map(|r| r.iter().rev().copied().collect()).collect();
        let rev_cards: Vec<u32> = cards.iter().rev().copied().collect();
        let rev = Arc::new(
            Distribution64::from_support(HyperGrid::new(rev_cards).unwrap(), &rows, dist.weights()).unwrap(),
        );
        let g: Vec<f64> = rev.rows().map(|r| {
            let back: Vec<u32> = r.iter().rev().copied().collect();
            f[dist.row_index(&back).unwrap()]
        }).collect();
        let config = SelectionConfig64::full(d);
        let a = decompose(&dist, &f, &config).unwrap();
        let b = decompose(&rev, &g, &config).unwrap();
        let na = a.component_norms();
        let nb: BTreeMap<Subset, f64> = b
            .component_norms()
            .into_iter()
            .map(|(s, v)| {
                let mut mapped: Subset = s.iter().map(|&i| d - 1 - i).collect();
                mapped.sort_unstable();
                (mapped, v)
            })
            .collect();
        let scale = na.values().chain(nb.values()).fold(1.0f64, |m, v| m.max(*v));
        for (s, v) in &na {
            prop_assert!(close(*v, nb.get(s).copied().unwrap_or(0.0), scale), "{:?}", s);
        }
        for (s, v) in &nb {
            prop_assert!(close(*v, na.get(s).copied().unwrap_or(0.0), scale), "{:?}", s);
        }
    }

    #[test]
    fn r_squared_grows_with_budget((cards, coverage, seed) in instance()) {
        let (dist, f) = build(&cards, coverage, seed);
        let r = dist.support_size();
        let mut last = f64::NEG_INFINITY;
        for budget in 1..=r {
            let config = SelectionConfig64::full(cards.len()).with_budget(budget);
            let dec = decompose(&dist, &f, &config).unwrap();
            let r2 = dec.metrics(&f).unwrap().r_squared.unwrap_or(0.0);
            prop_assert!(r2 >= last - 1e-10);
            last = r2;
        }
        prop_assert!(last > 1.0 - 1e-8);
    }

    #[test]
    fn enumeration_matches_index_space_size(cards in prop::collection::vec(1u32..=4, 0..=4), order in 0usize..=4) {
        let grid = HyperGrid::new(cards.clone()).unwrap();
        let order = order.min(cards.len());
        let count = enumerate_indices(&grid, order, &OrderingStrategy::Canonical).count();
        prop_assert_eq!(count as u128, index_space_size(&grid, order).unwrap());
    }
}
