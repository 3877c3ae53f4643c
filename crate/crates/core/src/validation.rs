//! Self-check suite comparing the pipeline against the brute-force oracles on
//! seeded random instances.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::anova::{decompose, Decomposition, Subset};
use crate::distribution::EmpiricalDistribution;
use crate::error::Result;
use crate::oracle::{
    check_hierarchical_orthogonality, exhaustive_basis_rank, max_component_deviation, mobius_anova, parity,
    walsh_transform, DeviationScale, OracleReport,
};
use crate::selection::SelectionConfig;
use crate::synthetic;

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationOptions {
    pub seed: u64,
    pub instances: usize,
    /// Perturb the pipeline output before comparing; every check must then
    /// fail. Used to prove the suite is able to fail.
    pub corrupt: bool,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            seed: 0x5eed,
            instances: 5,
            corrupt: false,
        }
    }
}

fn components(dec: &Decomposition<f64>, corrupt: bool) -> BTreeMap<Subset, Vec<f64>> {
    let mut comps = dec.components_with_intercept();
    if corrupt {
        let target = comps.keys().next_back().cloned();
        if let Some(v) = target.and_then(|k| comps.get_mut(&k)) {
            v[0] += 1e-3;
        }
    }
    comps
}

fn full_decomposition(dist: EmpiricalDistribution<f64>, f: &[f64]) -> Result<Decomposition<f64>> {
    let dims = dist.dims();
    decompose(&Arc::new(dist), f, &SelectionConfig::full(dims))
}

pub fn run_suite(options: &ValidationOptions) -> Result<Vec<OracleReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut reports = Vec::new();

    let mut worst = 0.0f64;
    for _ in 0..options.instances {
        let cards = synthetic::random_cardinalities(&mut rng, 4, 3);
        let dist = synthetic::random_product::<f64, _>(&mut rng, &cards)?;
        let f = synthetic::random_function(&mut rng, dist.support_size());
        let oracle = mobius_anova(&dist, &f)?;
        let dec = full_decomposition(dist, &f)?;
        worst = worst.max(max_component_deviation(&components(&dec, options.corrupt), &oracle));
    }
    reports.push(OracleReport::new("mobius-agreement", worst, 1e-8).with_seed(options.seed));

    let mut worst = 0.0f64;
    for _ in 0..options.instances {
        let dist = synthetic::boolean_cube::<f64>(5)?;
        let f = synthetic::random_function(&mut rng, dist.support_size());
        let coeffs = walsh_transform(&dist, &f)?;
        let oracle: BTreeMap<Subset, Vec<f64>> = coeffs
            .iter()
            .map(|(s, &c)| (s.clone(), dist.rows().map(|row| c * parity(s, row) as f64).collect()))
            .collect();
        let dec = full_decomposition(dist, &f)?;
        worst = worst.max(max_component_deviation(&components(&dec, options.corrupt), &oracle));
    }
    reports.push(OracleReport::new("walsh-agreement", worst, 1e-10).with_seed(options.seed));

    let mut worst = 0.0f64;
    let mut details = Vec::new();
    for _ in 0..options.instances {
        let cards = synthetic::random_cardinalities(&mut rng, 4, 3);
        let dist = synthetic::random_sparse::<f64, _>(&mut rng, &cards, 0.5)?;
        let f = synthetic::random_function(&mut rng, dist.support_size());
        let dist = Arc::new(dist);
        let dec = decompose(&dist, &f, &SelectionConfig::full(cards.len()))?;
        let mut comps = components(&dec, false);
        comps.remove(&Vec::new());
        if options.corrupt {
            // shift a non-empty component by a constant, breaking centering
            if let Some(v) = comps.values_mut().next() {
                v.iter_mut().for_each(|x| *x += 1e-3);
            }
        }
        let report = check_hierarchical_orthogonality(&dist, &comps, 1e-10, DeviationScale::Relative);
        worst = worst.max(report.max_abs_deviation);
        details.extend(report.details);
    }
    reports.push(
        OracleReport::new("hierarchical-orthogonality", worst, 1e-10)
            .with_seed(options.seed)
            .with_details(details),
    );

    let mut worst = 0.0f64;
    for _ in 0..options.instances {
        let cards = synthetic::random_cardinalities(&mut rng, 3, 3);
        let dist = synthetic::random_sparse::<f64, _>(&mut rng, &cards, 0.6)?;
        let expected = exhaustive_basis_rank(&dist, cards.len())?;
        let f = synthetic::random_function(&mut rng, dist.support_size());
        let dec = full_decomposition(dist, &f)?;
        let mut achieved = dec.selection().achieved_rank;
        if options.corrupt {
            achieved += 1;
        }
        worst = worst.max(achieved.abs_diff(expected) as f64);
    }
    reports.push(OracleReport::new("rank-agreement", worst, 0.0).with_seed(options.seed));

    let mut worst = 0.0f64;
    for _ in 0..options.instances {
        let cards = synthetic::random_cardinalities(&mut rng, 4, 3);
        let dist = synthetic::random_sparse::<f64, _>(&mut rng, &cards, 0.7)?;
        let f = synthetic::random_function(&mut rng, dist.support_size());
        let dec = full_decomposition(dist, &f)?;
        for k in 0..dec.distribution().support_size() {
            let mut gap = dec.shapley_row(k).efficiency_gap().abs();
            if options.corrupt {
                gap += 1e-3;
            }
            worst = worst.max(gap);
        }
    }
    reports.push(OracleReport::new("shapley-efficiency", worst, 1e-10).with_seed(options.seed));

    Ok(reports)
}
