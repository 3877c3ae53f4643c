//! Brute-force reference computations for small instances.
//!
//! Nothing here reuses the pipeline's basis, Gram or selection code: the
//! oracles only read the support rows and weights of the distribution and
//! recompute everything with explicit loops, so agreement with the pipeline
//! is an independent check.

use std::collections::{BTreeMap, HashMap};

use crate::anova::Subset;
use crate::distribution::{Category, EmpiricalDistribution};
use crate::error::{AnovaError, Result};
use crate::scalar::Scalar;

/// Outcome of one oracle check.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub name: String,
    pub max_abs_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub seed: Option<u64>,
    pub details: Vec<String>,
}

impl OracleReport {
    pub fn new(name: impl Into<String>, max_abs_deviation: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            max_abs_deviation,
            tolerance,
            pass: max_abs_deviation <= tolerance,
            seed: None,
            details: Vec::new(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn with_details(mut self, details: Vec<String>) -> Self {
        self.details = details;
        self
    }
}

fn mask_to_subset(mask: usize, d: usize) -> Subset {
    (0..d).filter(|i| mask >> i & 1 == 1).collect()
}

fn project(row: &[Category], mask: usize) -> Vec<Category> {
    row.iter()
        .enumerate()
        .filter(|(i, _)| mask >> i & 1 == 1)
        .map(|(_, &x)| x)
        .collect()
}

/// Per-feature marginal probabilities by direct summation.
fn naive_marginals<T: Scalar>(dist: &EmpiricalDistribution<T>) -> Vec<Vec<T>> {
    let grid = dist.grid();
    let mut marginals: Vec<Vec<T>> = (0..dist.dims())
        .map(|i| vec![T::zero(); grid.cardinality(i) as usize])
        .collect();
    for (row, &w) in dist.rows().zip(dist.weights()) {
        for (i, &x) in row.iter().enumerate() {
            marginals[i][x as usize] = marginals[i][x as usize] + w;
        }
    }
    marginals
}

/// Functional ANOVA components of an independent, full-grid distribution via
/// the alternating sum of conditional expectations
/// `f_A(x) = Σ_{B⊆A} (-1)^{|A|-|B|} E[f | X_B = x_B]`.
///
/// Returns every subset `A ⊆ [d]`, including `∅`.
pub fn mobius_anova<T: Scalar>(dist: &EmpiricalDistribution<T>, f_values: &[T]) -> Result<BTreeMap<Subset, Vec<T>>> {
    let d = dist.dims();
    let r = dist.support_size();
    if f_values.len() != r {
        return Err(AnovaError::LengthMismatch {
            expected: r,
            found: f_values.len(),
        });
    }
    if d > 16 {
        return Err(AnovaError::OraclePrecondition(format!("{d} features is too many")));
    }
    let full = dist.grid().size().map_err(|_| AnovaError::OraclePrecondition("grid too large".into()))?;
    if full != r as u128 {
        return Err(AnovaError::OraclePrecondition(format!(
            "support has {r} rows but the grid has {full} cells"
        )));
    }
    let marginals = naive_marginals(dist);
    let tol = T::of(1e-12);
    for (row, &w) in dist.rows().zip(dist.weights()) {
        let product = row
            .iter()
            .enumerate()
            .fold(T::one(), |acc, (i, &x)| acc * marginals[i][x as usize]);
        if (product - w).abs() > tol {
            return Err(AnovaError::OraclePrecondition(
                "distribution is not the product of its marginals".into(),
            ));
        }
    }

    let masks = 1usize << d;
    let mut conditional: Vec<Vec<T>> = Vec::with_capacity(masks);
    for mask in 0..masks {
        let mut sums: HashMap<Vec<Category>, (T, T)> = HashMap::new();
        for ((row, &w), &f) in dist.rows().zip(dist.weights()).zip(f_values) {
            let e = sums.entry(project(row, mask)).or_insert((T::zero(), T::zero()));
            e.0 = e.0 + w * f;
            e.1 = e.1 + w;
        }
        conditional.push(
            dist.rows()
                .map(|row| {
                    let (num, den) = sums[&project(row, mask)];
                    num / den
                })
                .collect(),
        );
    }

    let mut out = BTreeMap::new();
    for a in 0..masks {
        let mut component = vec![T::zero(); r];
        // all submasks of a, including a and 0
        let mut b = a;
        loop {
            let sign = if (a.count_ones() - b.count_ones()) % 2 == 0 {
                T::one()
            } else {
                -T::one()
            };
            for (c, &e) in component.iter_mut().zip(&conditional[b]) {
                *c = *c + sign * e;
            }
            if b == 0 {
                break;
            }
            b = (b - 1) & a;
        }
        out.insert(mask_to_subset(a, d), component);
    }
    Ok(out)
}

/// Fourier–Walsh coefficients `f̂(A) = E[f χ_A]`, `χ_A(x) = (-1)^{Σ_{i∈A} x_i}`,
/// of a function on the uniform Boolean cube.
pub fn walsh_transform<T: Scalar>(dist: &EmpiricalDistribution<T>, f_values: &[T]) -> Result<BTreeMap<Subset, T>> {
    let d = dist.dims();
    if d > 16 {
        return Err(AnovaError::OraclePrecondition(format!("{d} features exceeds 16")));
    }
    if dist.grid().cardinalities().iter().any(|&n| n != 2) {
        return Err(AnovaError::OraclePrecondition("grid is not Boolean".into()));
    }
    let n = 1usize << d;
    if dist.support_size() != n {
        return Err(AnovaError::OraclePrecondition("support is not the full cube".into()));
    }
    if f_values.len() != n {
        return Err(AnovaError::LengthMismatch {
            expected: n,
            found: f_values.len(),
        });
    }
    let uniform = T::one() / T::of_usize(n);
    if dist.weights().iter().any(|&w| (w - uniform).abs() > T::of(1e-12)) {
        return Err(AnovaError::OraclePrecondition("weights are not uniform".into()));
    }
    let mut table = vec![T::zero(); n];
    for (row, &f) in dist.rows().zip(f_values) {
        let index = row.iter().enumerate().fold(0usize, |acc, (i, &x)| acc | (x as usize) << i);
        table[index] = f;
    }
    // in-place fast Walsh–Hadamard butterflies
    let mut h = 1;
    while h < n {
        for block in (0..n).step_by(2 * h) {
            for j in block..block + h {
                let (a, b) = (table[j], table[j + h]);
                table[j] = a + b;
                table[j + h] = a - b;
            }
        }
        h *= 2;
    }
    Ok(table
        .into_iter()
        .enumerate()
        .map(|(mask, s)| (mask_to_subset(mask, d), s * uniform))
        .collect())
}

/// `χ_A` evaluated on a Boolean row.
pub fn parity(subset: &[usize], row: &[Category]) -> i32 {
    if subset.iter().map(|&i| row[i]).sum::<u32>() % 2 == 0 {
        1
    } else {
        -1
    }
}

/// How a deviation `|⟨f_A, g⟩|` is measured against the tolerance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeviationScale {
    Absolute,
    /// Divided by `max(1, ‖f_A‖·‖g‖)`. Rounding two exactly orthogonal
    /// vectors to floating point already moves their inner product by about
    /// `eps·‖f_A‖·‖g‖`, so for large components only this scale can reach
    /// machine precision. Identical to `Absolute` while the norms stay below 1.
    Relative,
}

/// Checks the hierarchical orthogonality condition in full strength: each
/// non-empty component must be orthogonal to every indicator `1{X_B = v}` for
/// every strict subset `B` (indicators of the maximal strict subsets `A∖{i}`
/// span all functions of smaller subsets), and to every other supplied
/// component on a strict subset.
pub fn check_hierarchical_orthogonality<T: Scalar>(
    dist: &EmpiricalDistribution<T>,
    components: &BTreeMap<Subset, Vec<T>>,
    tolerance: f64,
    scale: DeviationScale,
) -> OracleReport {
    let weights = dist.weights();
    let norm = |v: &[T]| -> f64 {
        let mut s = T::zero();
        for k in 0..weights.len() {
            s = s + weights[k] * v[k] * v[k];
        }
        s.to_f64_lossy().sqrt()
    };
    let scaled = |dev: f64, na: f64, nb: f64| match scale {
        DeviationScale::Absolute => dev,
        DeviationScale::Relative => dev / (na * nb).max(1.0),
    };
    let mut worst = 0.0f64;
    let mut details = Vec::new();
    for (a, fa) in components {
        if a.is_empty() {
            continue;
        }
        let na = norm(fa);
        for (b, fb) in components {
            if b.len() < a.len() && b.iter().all(|i| a.contains(i)) {
                let mut s = T::zero();
                for k in 0..weights.len() {
                    s = s + weights[k] * fa[k] * fb[k];
                }
                let dev = scaled(s.abs().to_f64_lossy(), na, norm(fb));
                if dev > tolerance {
                    details.push(format!("<f_{a:?}, f_{b:?}> = {dev:e}"));
                }
                worst = worst.max(dev);
            }
        }
        for drop in a {
            let b: Vec<usize> = a.iter().copied().filter(|i| i != drop).collect();
            let mut sums: HashMap<Vec<Category>, (T, T)> = HashMap::new();
            for ((row, &w), &v) in dist.rows().zip(weights).zip(fa) {
                let key: Vec<Category> = b.iter().map(|&i| row[i]).collect();
                let e = sums.entry(key).or_insert((T::zero(), T::zero()));
                e.0 = e.0 + w * v;
                e.1 = e.1 + w;
            }
            for (value, (s, mass)) in sums {
                // ‖1{X_B = v}‖ = sqrt(P(X_B = v))
                let dev = scaled(s.abs().to_f64_lossy(), na, mass.to_f64_lossy().sqrt());
                if dev > tolerance {
                    details.push(format!("<f_{a:?}, 1{{X_{b:?} = {value:?}}}> = {dev:e}"));
                }
                worst = worst.max(dev);
            }
        }
    }
    let name = match scale {
        DeviationScale::Absolute => "hierarchical-orthogonality",
        DeviationScale::Relative => "hierarchical-orthogonality-relative",
    };
    OracleReport::new(name, worst, tolerance).with_details(details)
}

/// Numerical rank of the full evaluation matrix of all keys with
/// `|A| ≤ max_order`, computed by Gaussian elimination with complete pivoting.
pub fn exhaustive_basis_rank<T: Scalar>(dist: &EmpiricalDistribution<T>, max_order: usize) -> Result<usize> {
    const LIMIT: usize = 4096;
    let d = dist.dims();
    if d > 20 {
        return Err(AnovaError::OraclePrecondition(format!("{d} features is too many")));
    }
    let cards = dist.grid().cardinalities();
    let r = dist.support_size();

    let mut keys: Vec<(Vec<usize>, Vec<Category>)> = Vec::new();
    for mask in 0..1usize << d {
        let subset = mask_to_subset(mask, d);
        if subset.len() > max_order {
            continue;
        }
        let count = subset
            .iter()
            .try_fold(1usize, |acc, &i| acc.checked_mul(cards[i] as usize - 1))
            .unwrap_or(usize::MAX);
        if keys.len().saturating_add(count) > LIMIT {
            return Err(AnovaError::OraclePrecondition(format!(
                "more than {LIMIT} basis columns"
            )));
        }
        if count == 0 {
            continue;
        }
        let mut levels = vec![0; subset.len()];
        'odometer: loop {
            keys.push((subset.clone(), levels.clone()));
            for pos in (0..levels.len()).rev() {
                levels[pos] += 1;
                if levels[pos] < cards[subset[pos]] - 1 {
                    continue 'odometer;
                }
                levels[pos] = 0;
            }
            break;
        }
    }

    let mut matrix: Vec<Vec<f64>> = Vec::with_capacity(keys.len());
    for (subset, levels) in &keys {
        let mut p: HashMap<Vec<Category>, f64> = HashMap::new();
        for (row, &w) in dist.rows().zip(dist.weights()) {
            let proj: Vec<Category> = subset.iter().map(|&i| row[i]).collect();
            *p.entry(proj).or_insert(0.0) += w.to_f64_lossy();
        }
        let mut column: Vec<f64> = dist
            .rows()
            .zip(dist.weights())
            .map(|(row, &w)| {
                let mut num = 1.0;
                for (&i, &z) in subset.iter().zip(levels) {
                    num *= if row[i] == z {
                        1.0
                    } else if row[i] == cards[i] - 1 {
                        -1.0
                    } else {
                        0.0
                    };
                }
                let proj: Vec<Category> = subset.iter().map(|&i| row[i]).collect();
                w.to_f64_lossy().sqrt() * num / p[&proj]
            })
            .collect();
        let norm = column.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            column.iter_mut().for_each(|v| *v /= norm);
        }
        matrix.push(column);
    }

    // complete-pivoting elimination on the (columns × rows) array
    let m = matrix.len();
    let mut rank = 0;
    let mut row_used = vec![false; r];
    let mut col_used = vec![false; m];
    loop {
        let mut best = (0.0f64, usize::MAX, usize::MAX);
        for (j, col) in matrix.iter().enumerate() {
            if col_used[j] {
                continue;
            }
            for (i, &v) in col.iter().enumerate() {
                if !row_used[i] && v.abs() > best.0 {
                    best = (v.abs(), j, i);
                }
            }
        }
        if best.0 <= 1e-9 {
            break;
        }
        let (_, pj, pi) = best;
        col_used[pj] = true;
        row_used[pi] = true;
        rank += 1;
        let pivot_col = matrix[pj].clone();
        for (j, col) in matrix.iter_mut().enumerate() {
            if col_used[j] {
                continue;
            }
            let factor = col[pi] / pivot_col[pi];
            if factor != 0.0 {
                for (v, &p) in col.iter_mut().zip(&pivot_col) {
                    *v -= factor * p;
                }
            }
        }
    }
    Ok(rank)
}

/// Shapley values of row `k` from a component map, `Σ_{A∋i} f_A(x)/|A|`.
pub fn shapley_from_components<T: Scalar>(components: &BTreeMap<Subset, Vec<T>>, dims: usize, k: usize) -> Vec<T> {
    let mut shap = vec![T::zero(); dims];
    for (subset, values) in components {
        for &i in subset {
            shap[i] = shap[i] + values[k] / T::of_usize(subset.len());
        }
    }
    shap
}

/// Largest entrywise deviation between two component maps; subsets missing
/// on one side are compared against zero.
pub fn max_component_deviation<T: Scalar>(
    left: &BTreeMap<Subset, Vec<T>>,
    right: &BTreeMap<Subset, Vec<T>>,
) -> f64 {
    let mut worst = 0.0f64;
    for (subset, a) in left {
        match right.get(subset) {
            Some(b) => {
                for (x, y) in a.iter().zip(b) {
                    worst = worst.max((*x - *y).abs().to_f64_lossy());
                }
            }
            None => {
                for x in a {
                    worst = worst.max(x.abs().to_f64_lossy());
                }
            }
        }
    }
    for (subset, b) in right {
        if !left.contains_key(subset) {
            for y in b {
                worst = worst.max(y.abs().to_f64_lossy());
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::HyperGrid;

    fn cube(d: usize) -> EmpiricalDistribution<f64> {
        let rows: Vec<Vec<u32>> = (0..1u32 << d)
            .map(|m| (0..d).map(|i| (m >> i) & 1).collect())
            .collect();
        EmpiricalDistribution::from_dataset(&rows, None).unwrap()
    }

    #[test]
    fn walsh_of_constant_and_and() {
        let dist = cube(2);
        let ones = vec![1.0; 4];
        let w = walsh_transform(&dist, &ones).unwrap();
        assert_eq!(w[&vec![]], 1.0);
        assert!(w.iter().filter(|(a, _)| !a.is_empty()).all(|(_, &v)| v == 0.0));

        let and: Vec<f64> = dist.rows().map(|x| (x[0] & x[1]) as f64).collect();
        let w = walsh_transform(&dist, &and).unwrap();
        assert_eq!(w[&vec![]], 0.25);
        assert_eq!(w[&vec![0]], -0.25);
        assert_eq!(w[&vec![1]], -0.25);
        assert_eq!(w[&vec![0, 1]], 0.25);
    }

    #[test]
    fn walsh_parseval() {
        let dist = cube(3);
        let f: Vec<f64> = (0..8).map(|k| ((k * 37 % 11) as f64) - 4.5).collect();
        let w = walsh_transform(&dist, &f).unwrap();
        let energy: f64 = w.values().map(|v| v * v).sum();
        let second: f64 = f.iter().map(|v| v * v).sum::<f64>() / 8.0;
        assert!((energy - second).abs() < 1e-12);
    }

    #[test]
    fn walsh_preconditions() {
        let dist = EmpiricalDistribution::<f64>::from_dataset(&[[0u32], [1], [2]], None).unwrap();
        assert!(walsh_transform(&dist, &[0.0; 3]).is_err());
        let skewed = EmpiricalDistribution::<f64>::from_dataset(&[[0u32], [1], [1]], None).unwrap();
        assert!(walsh_transform(&skewed, &[0.0; 2]).is_err());
    }

    #[test]
    fn mobius_examples() {
        let dist = cube(2);
        let constant = vec![3.0; 4];
        let comps = mobius_anova(&dist, &constant).unwrap();
        assert!(comps[&vec![]].iter().all(|&v| (v - 3.0).abs() < 1e-15));
        assert!(comps[&vec![0]].iter().all(|&v| v.abs() < 1e-15));

        let chi1: Vec<f64> = dist.rows().map(|x| parity(&[0], x) as f64).collect();
        let comps = mobius_anova(&dist, &chi1).unwrap();
        assert_eq!(comps[&vec![0]], chi1);
        assert!(comps[&vec![1]].iter().chain(&comps[&vec![0, 1]]).all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn mobius_ternary_main_effect() {
        // f(x1, x2) = sign(x1 - x2/2) on the uniform 3x3 grid
        let rows: Vec<[u32; 2]> = (0..3).flat_map(|a| (0..3).map(move |b| [a, b])).collect();
        let dist = EmpiricalDistribution::<f64>::from_dataset(&rows, None).unwrap();
        let f: Vec<f64> = dist
            .rows()
            .map(|x| {
                let v = x[0] as f64 - 0.5 * x[1] as f64;
                if v > 0.0 { 1.0 } else if v < 0.0 { -1.0 } else { 0.0 }
            })
            .collect();
        let comps = mobius_anova(&dist, &f).unwrap();
        let w = 1.0 / 9.0;
        let norm = |a: &Vec<usize>| comps[a].iter().map(|v| v * v * w).sum::<f64>();
        assert!((norm(&vec![]) - 1.0 / 9.0).abs() < 1e-14);
        assert!((norm(&vec![0]) - 14.0 / 27.0).abs() < 1e-14);
        assert!((norm(&vec![1]) - 2.0 / 27.0).abs() < 1e-14);
        assert!((norm(&vec![0, 1]) - 2.0 / 27.0).abs() < 1e-14);
        // main effect of x1 on its three levels
        let main: Vec<f64> = (0..3).map(|a| comps[&vec![0]][3 * a]).collect();
        assert!((main[0] + 1.0).abs() < 1e-14);
        assert!((main[1] - 1.0 / 3.0).abs() < 1e-14);
        assert!((main[2] - 2.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn mobius_rejects_dependent_or_sparse() {
        let sparse = EmpiricalDistribution::<f64>::from_dataset(&[[0u32, 0], [1, 1]], None).unwrap();
        assert!(mobius_anova(&sparse, &[0.0, 1.0]).is_err());
        let grid = HyperGrid::new(vec![2, 2]).unwrap();
        let dependent =
            EmpiricalDistribution::from_support(grid, &[[0, 0], [0, 1], [1, 0], [1, 1]], &[0.4, 0.1, 0.1, 0.4])
                .unwrap();
        assert!(mobius_anova(&dependent, &[0.0; 4]).is_err());
    }

    #[test]
    fn orthogonality_report() {
        let dist = cube(2);
        let mut comps = BTreeMap::new();
        comps.insert(vec![], vec![0.5; 4]);
        assert!(check_hierarchical_orthogonality(&dist, &comps, 1e-10, DeviationScale::Absolute).pass);
        let shifted: Vec<f64> = dist.rows().map(|x| parity(&[0], x) as f64 + 0.1).collect();
        comps.insert(vec![0], shifted);
        let report = check_hierarchical_orthogonality(&dist, &comps, 1e-10, DeviationScale::Absolute);
        assert!(!report.pass);
        assert!((report.max_abs_deviation - 0.1).abs() < 1e-12);
    }

    #[test]
    fn exhaustive_ranks() {
        let rows: Vec<[u32; 2]> = (0..2).flat_map(|a| (0..3).map(move |b| [a, b])).collect();
        let full = EmpiricalDistribution::<f64>::from_dataset(&rows, None).unwrap();
        assert_eq!(exhaustive_basis_rank(&full, 2).unwrap(), 6);
        let diagonal = EmpiricalDistribution::<f64>::from_dataset(&[[0u32, 0], [1, 1]], None).unwrap();
        assert_eq!(exhaustive_basis_rank(&diagonal, 2).unwrap(), 2);
        let grid = HyperGrid::new(vec![2, 2]).unwrap();
        let three = EmpiricalDistribution::from_support(grid, &[[0, 0], [0, 1], [1, 0]], &[0.5, 0.2, 0.3]).unwrap();
        assert_eq!(exhaustive_basis_rank(&three, 2).unwrap(), 3);
        let big = EmpiricalDistribution::<f64>::from_dataset(&[[5u32; 6]], None).unwrap();
        assert!(exhaustive_basis_rank(&big, 6).is_err());
    }
}
