//! Hierarchical projection of basis columns.
//!
//! On a support whose projection onto `A` is not rectangular, the closed-form
//! column `phi_A^z` can correlate with functions of a strict subset of `A`
//! (on the three-point support `{(0,0),(0,1),(1,0)}`, `⟨phi_12, phi_1⟩ =
//! 1/q_1`). The projected column removes exactly that part: it subtracts the
//! weighted projection onto `V_A = Σ_{i∈A} L²(X_{A∖{i}})`, the functions of
//! `X_A` that ignore at least one member of `A`. The result is still a
//! function of `X_A` and is orthogonal to every function of every strict
//! subset of `A`.
//!
//! Whenever `phi_A^z` is already orthogonal to `V_A` (checked exactly on the
//! integer sign pattern) the column is returned unchanged, so full-support,
//! independent and Boolean-uniform cases reproduce the closed form bit for bit.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;

use crate::basis::{numerator_sign, IndexKey};
use crate::distribution::{Category, EmpiricalDistribution, MarginalTable};
use crate::error::Result;
use crate::scalar::{axpy, weighted_dot, Scalar};

/// Projector onto the orthogonal complement of `V_A` for one subset `A`,
/// working on the distinct projections (cells) of the support onto `A`.
pub struct HierarchicalProjector<T> {
    subset: Vec<usize>,
    marginal: Arc<MarginalTable<T>>,
    /// `groups[pos][cell]`: group of `cell` once position `pos` is dropped.
    groups: Vec<Vec<usize>>,
    group_counts: Vec<usize>,
    basis: OnceLock<Vec<Vec<T>>>,
}

impl<T: Scalar> HierarchicalProjector<T> {
    pub fn new(dist: &EmpiricalDistribution<T>, subset: &[usize]) -> Result<Self> {
        let marginal = dist.marginal(subset)?;
        let mut groups = Vec::with_capacity(subset.len());
        let mut group_counts = Vec::with_capacity(subset.len());
        for pos in 0..subset.len() {
            let mut ids: BTreeMap<Vec<Category>, usize> = BTreeMap::new();
            let assignment = marginal
                .cells()
                .iter()
                .map(|cell| {
                    let mut reduced = cell.clone();
                    reduced.remove(pos);
                    let next = ids.len();
                    *ids.entry(reduced).or_insert(next)
                })
                .collect();
            groups.push(assignment);
            group_counts.push(ids.len());
        }
        Ok(Self {
            subset: subset.to_vec(),
            marginal,
            groups,
            group_counts,
            basis: OnceLock::new(),
        })
    }

    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    /// Sign pattern of `key` on each cell.
    fn cell_signs(&self, key: &IndexKey, cardinalities: &[u32]) -> Vec<i8> {
        // numerator_sign indexes rows by feature, so lift each cell to a sparse row
        let mut scratch = vec![0; cardinalities.len()];
        self.marginal
            .cells()
            .iter()
            .map(|cell| {
                for (&i, &x) in self.subset.iter().zip(cell) {
                    scratch[i] = x;
                }
                numerator_sign(&scratch, key, cardinalities)
            })
            .collect()
    }

    /// True when the closed-form column is exactly orthogonal to `V_A`:
    /// `⟨phi, 1_g⟩ = Σ_{cells in g} sign` vanishes for every group `g`.
    fn already_orthogonal(&self, signs: &[i8]) -> bool {
        self.groups.iter().zip(&self.group_counts).all(|(assign, &count)| {
            let mut sums = vec![0i64; count];
            for (&g, &s) in assign.iter().zip(signs) {
                sums[g] += s as i64;
            }
            sums.iter().all(|&s| s == 0)
        })
    }

    /// Orthonormal basis of `V_A` on the cell space under the weights `p_A`.
    fn basis(&self) -> &[Vec<T>] {
        self.basis.get_or_init(|| {
            let probs = self.marginal.probabilities();
            let cells = probs.len();
            let tolerance = T::default_tolerance();
            let mut basis: Vec<Vec<T>> = Vec::new();
            for (assign, &count) in self.groups.iter().zip(&self.group_counts) {
                for g in 0..count {
                    let column: Vec<T> = (0..cells)
                        .map(|c| if assign[c] == g { T::one() } else { T::zero() })
                        .collect();
                    let norm = weighted_dot(probs, &column, &column).sqrt();
                    let mut residual = column;
                    for _pass in 0..2 {
                        for q in &basis {
                            let h = weighted_dot(probs, q, &residual);
                            axpy(-h, q, &mut residual);
                        }
                    }
                    let rnorm = weighted_dot(probs, &residual, &residual).sqrt();
                    if rnorm > tolerance * norm {
                        let inv = rnorm.recip();
                        residual.iter_mut().for_each(|v| *v = *v * inv);
                        basis.push(residual);
                    }
                }
            }
            basis
        })
    }

    /// Projected column of `key` on the cells of `A`.
    pub fn project_cells(&self, key: &IndexKey, cardinalities: &[u32]) -> Vec<T> {
        let signs = self.cell_signs(key, cardinalities);
        let probs = self.marginal.probabilities();
        let mut values: Vec<T> = signs
            .iter()
            .zip(probs)
            .map(|(&s, &p)| match s {
                0 => T::zero(),
                s if s > 0 => p.recip(),
                _ => -p.recip(),
            })
            .collect();
        if self.subset.is_empty() || self.already_orthogonal(&signs) {
            return values;
        }
        for _pass in 0..2 {
            for q in self.basis() {
                let h = weighted_dot(probs, q, &values);
                axpy(-h, q, &mut values);
            }
        }
        values
    }

    /// Projected column of `key` on every support row.
    pub fn project(&self, key: &IndexKey, cardinalities: &[u32]) -> Vec<T> {
        let cells = self.project_cells(key, cardinalities);
        self.marginal.row_cells().iter().map(|&c| cells[c]).collect()
    }
}

/// Projected columns for `keys`, in the same order.
pub fn hierarchical_columns<T: Scalar>(dist: &EmpiricalDistribution<T>, keys: &[IndexKey]) -> Result<Vec<Vec<T>>> {
    for key in keys {
        key.validate(dist.grid())?;
    }
    let mut by_subset: BTreeMap<&[usize], Vec<usize>> = BTreeMap::new();
    for (n, key) in keys.iter().enumerate() {
        by_subset.entry(key.subset()).or_default().push(n);
    }
    let cards = dist.grid().cardinalities();
    let groups: Vec<(&[usize], Vec<usize>)> = by_subset.into_iter().collect();
    let computed = groups
        .par_iter()
        .map(|(subset, members)| {
            let projector = HierarchicalProjector::new(dist, subset)?;
            Ok(members
                .iter()
                .map(|&n| (n, projector.project(&keys[n], cards)))
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    let mut columns = vec![Vec::new(); keys.len()];
    for (n, column) in computed.into_iter().flatten() {
        columns[n] = column;
    }
    Ok(columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::evaluate_phi;
    use crate::distribution::HyperGrid;

    fn three_point(q1: f64, q2: f64) -> EmpiricalDistribution<f64> {
        EmpiricalDistribution::from_support(
            HyperGrid::new(vec![2, 2]).unwrap(),
            &[[0, 0], [0, 1], [1, 0]],
            &[1.0 - q1 - q2, q2, q1],
        )
        .unwrap()
    }

    #[test]
    fn closed_form_pair_column_is_not_hierarchical_on_sparse_support() {
        let (q1, q2) = (0.3, 0.2);
        let dist = three_point(q1, q2);
        let g = dist.grid();
        let u1 = evaluate_phi(&dist, &IndexKey::new(g, vec![0], vec![0]).unwrap()).unwrap();
        let u12 = evaluate_phi(&dist, &IndexKey::new(g, vec![0, 1], vec![0, 0]).unwrap()).unwrap();
        let ip = dist.inner_product(&u12.values, &u1.values).unwrap();
        assert!((ip - 1.0 / q1).abs() < 1e-12);
    }

    #[test]
    fn projected_pair_column_is_orthogonal_to_margins() {
        let dist = three_point(0.3, 0.2);
        let g = dist.grid();
        let key = IndexKey::new(g, vec![0, 1], vec![0, 0]).unwrap();
        let col = &hierarchical_columns(&dist, &[key]).unwrap()[0];
        // every function of X_1 or X_2 alone is spanned by (u_empty, u_1, u_2)
        // here, so the projected interaction vanishes entirely
        assert!(col.iter().all(|v| v.abs() < 1e-12), "{col:?}");
    }

    #[test]
    fn unchanged_on_full_support() {
        let rows: Vec<[u32; 2]> = (0..3).flat_map(|a| (0..3).map(move |b| [a, b])).collect();
        let w = [0.05, 0.1, 0.15, 0.2, 0.05, 0.05, 0.1, 0.2, 0.1];
        let dist = EmpiricalDistribution::from_support(HyperGrid::new(vec![3, 3]).unwrap(), &rows, &w).unwrap();
        let keys: Vec<IndexKey> = crate::basis::enumerate_indices(
            dist.grid(),
            2,
            &crate::selection::OrderingStrategy::Canonical,
        )
        .collect();
        let projected = hierarchical_columns(&dist, &keys).unwrap();
        for (key, col) in keys.iter().zip(&projected) {
            assert_eq!(&evaluate_phi(&dist, key).unwrap().values, col);
        }
    }

    #[test]
    fn singleton_with_missing_level_is_centered() {
        // level 1 of a ternary feature never observed
        let grid = HyperGrid::new(vec![3]).unwrap();
        let dist: EmpiricalDistribution<f64> = EmpiricalDistribution::from_support(grid, &[[0], [2]], &[0.4, 0.6]).unwrap();
        let key = IndexKey::new(dist.grid(), vec![0], vec![1]).unwrap();
        let raw = evaluate_phi(&dist, &key).unwrap().values;
        assert!(dist.mean(&raw).unwrap().abs() > 0.5);
        let col = &hierarchical_columns(&dist, &[key]).unwrap()[0];
        assert!(dist.mean(col).unwrap().abs() < 1e-15);
    }
}
