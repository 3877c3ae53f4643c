//! Index space and signed-inverse-likelihood basis functions.
//!
//! A basis function is identified by an [`IndexKey`] `(A, z)`: a sorted
//! feature subset `A` and one level `z_i ∈ {0..N_i-2}` per member. Its value
//! on a support row `x` is
//!
//! ```text
//! phi_A^z(x) = prod_{i in A} (1{x_i = z_i} - 1{x_i = N_i - 1}) / p_A(x_A)
//! ```
//!
//! The numerator only takes the values -1, 0 and +1; the denominator is the
//! marginal probability of the projection, which is positive on the support.

use std::fmt;
use std::sync::Arc;

use crate::distribution::{Category, EmpiricalDistribution, HyperGrid, MarginalTable};
use crate::error::{AnovaError, Result};
use crate::scalar::Scalar;
use crate::selection::OrderingStrategy;

/// One element `(A, z)` of the index space.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexKey {
    subset: Vec<usize>,
    levels: Vec<Category>,
}

impl IndexKey {
    /// The key of the constant function.
    pub fn empty() -> Self {
        Self {
            subset: Vec::new(),
            levels: Vec::new(),
        }
    }

    /// Validating constructor. `subset` must be strictly increasing and every
    /// level must lie in the truncated range `0..N_i-1`.
    pub fn new(grid: &HyperGrid, subset: Vec<usize>, levels: Vec<Category>) -> Result<Self> {
        let key = Self { subset, levels };
        key.validate(grid)?;
        Ok(key)
    }

    pub(crate) fn from_parts_unchecked(subset: Vec<usize>, levels: Vec<Category>) -> Self {
        Self { subset, levels }
    }

    pub fn validate(&self, grid: &HyperGrid) -> Result<()> {
        let fail = |reason: String| AnovaError::InvalidKey {
            key: self.to_string(),
            reason,
        };
        if self.subset.len() != self.levels.len() {
            return Err(fail("subset and levels differ in length".into()));
        }
        if self.subset.windows(2).any(|w| w[0] >= w[1]) {
            return Err(fail("subset is not strictly increasing".into()));
        }
        for (&i, &z) in self.subset.iter().zip(&self.levels) {
            if i >= grid.dims() {
                return Err(fail(format!("feature {i} out of range")));
            }
            let n = grid.cardinality(i);
            if z + 1 >= n {
                return Err(fail(format!(
                    "level {z} of feature {i} outside truncated range 0..{}",
                    n.saturating_sub(1)
                )));
            }
        }
        Ok(())
    }

    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    pub fn levels(&self) -> &[Category] {
        &self.levels
    }

    pub fn order(&self) -> usize {
        self.subset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subset.is_empty()
    }

    pub fn touches(&self, feature: usize) -> bool {
        self.subset.binary_search(&feature).is_ok()
    }
}

impl fmt::Display for IndexKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (n, i) in self.subset.iter().enumerate() {
            if n > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}:(")?;
        for (n, z) in self.levels.iter().enumerate() {
            if n > 0 {
                write!(f, ",")?;
            }
            write!(f, "{z}")?;
        }
        write!(f, ")")
    }
}

/// Evaluation of one basis function on every support row.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisColumn<T> {
    pub key: IndexKey,
    pub values: Vec<T>,
}

/// Number of keys `(A, z)` with `|A| ≤ max_order`:
/// `Σ_{|A| ≤ max_order} ∏_{i∈A} (N_i - 1)`. Equals `|E|` at `max_order = d`.
pub fn index_space_size(grid: &HyperGrid, max_order: usize) -> Result<u128> {
    if max_order > grid.dims() {
        return Err(AnovaError::InvalidConfig(format!(
            "max_order {max_order} exceeds dimension {}",
            grid.dims()
        )));
    }
    // elementary symmetric polynomials of (N_i - 1), truncated at max_order
    let mut e = vec![0u128; max_order + 1];
    e[0] = 1;
    for &n in grid.cardinalities() {
        let m = (n - 1) as u128;
        for k in (1..=max_order).rev() {
            let add = e[k - 1].checked_mul(m).ok_or(AnovaError::Overflow)?;
            e[k] = e[k].checked_add(add).ok_or(AnovaError::Overflow)?;
        }
    }
    e.iter()
        .try_fold(0u128, |acc, &x| acc.checked_add(x))
        .ok_or(AnovaError::Overflow)
}

/// Lazily enumerates feature subsets graded by cardinality.
///
/// Within one cardinality, subsets are produced in lexicographic order of the
/// *positions* in `order`, so features early in `order` are combined first.
/// With an adjacency, only cliques (every pair adjacent) of size ≥ 2 are
/// produced; this family is closed under taking subsets.
#[derive(Debug, Clone)]
pub struct SubsetStream {
    order: Vec<usize>,
    adjacency: Option<Arc<Vec<Vec<usize>>>>,
    max_size: usize,
    size: usize,
    stack: Vec<usize>,
    fresh: bool,
}

impl SubsetStream {
    pub fn new(order: Vec<usize>, adjacency: Option<Arc<Vec<Vec<usize>>>>, max_size: usize) -> Self {
        Self {
            order,
            adjacency,
            max_size,
            size: 0,
            stack: Vec::new(),
            fresh: true,
        }
    }

    fn admissible(&self, candidate: usize) -> bool {
        let Some(adj) = &self.adjacency else {
            return true;
        };
        let feature = self.order[candidate];
        self.stack.iter().all(|&p| {
            let other = self.order[p];
            adj.get(other).is_some_and(|n| n.binary_search(&feature).is_ok())
        })
    }

    /// Advance `stack` to the next admissible combination of length `size`.
    fn advance(&mut self) -> bool {
        let n = self.order.len();
        let mut cand = if self.fresh {
            self.fresh = false;
            0
        } else {
            match self.stack.pop() {
                Some(p) => p + 1,
                None => return false,
            }
        };
        loop {
            let needed = self.size - self.stack.len();
            if cand + needed > n {
                match self.stack.pop() {
                    Some(p) => {
                        cand = p + 1;
                        continue;
                    }
                    None => return false,
                }
            }
            if self.admissible(cand) {
                self.stack.push(cand);
                if self.stack.len() == self.size {
                    return true;
                }
            }
            cand += 1;
        }
    }
}

impl Iterator for SubsetStream {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        loop {
            if self.size > self.max_size {
                return None;
            }
            if self.size == 0 {
                self.size = 1;
                self.fresh = true;
                self.stack.clear();
                return Some(Vec::new());
            }
            if self.advance() {
                let mut subset: Vec<usize> = self.stack.iter().map(|&p| self.order[p]).collect();
                subset.sort_unstable();
                return Some(subset);
            }
            self.size += 1;
            self.fresh = true;
            self.stack.clear();
        }
    }
}

/// Lazily expands a subset stream into index keys, iterating the truncated
/// grid `E_{A-}` of each subset in lexicographic order.
#[derive(Debug, Clone)]
pub struct KeyStream {
    subsets: SubsetStream,
    cardinalities: Vec<u32>,
    current: Option<(Vec<usize>, Vec<Category>)>,
}

impl KeyStream {
    pub fn new(grid: &HyperGrid, subsets: SubsetStream) -> Self {
        Self {
            subsets,
            cardinalities: grid.cardinalities().to_vec(),
            current: None,
        }
    }

    fn truncated(&self, i: usize) -> u32 {
        self.cardinalities[i].saturating_sub(1)
    }
}

impl Iterator for KeyStream {
    type Item = IndexKey;

    fn next(&mut self) -> Option<IndexKey> {
        loop {
            if let Some((subset, levels)) = &mut self.current {
                let key = IndexKey::from_parts_unchecked(subset.clone(), levels.clone());
                // odometer increment, last position fastest
                let mut done = true;
                for pos in (0..levels.len()).rev() {
                    let limit = self.cardinalities[subset[pos]] - 1;
                    if levels[pos] + 1 < limit {
                        levels[pos] += 1;
                        done = false;
                        break;
                    }
                    levels[pos] = 0;
                }
                if done {
                    self.current = None;
                }
                return Some(key);
            }
            let subset = self.subsets.next()?;
            if subset.iter().all(|&i| self.truncated(i) >= 1) {
                let levels = vec![0; subset.len()];
                self.current = Some((subset, levels));
            }
        }
    }
}

/// Stream of admissible keys with `|A| ≤ max_order` in the order prescribed
/// by `ordering`. Features with a single category never appear.
pub fn enumerate_indices(grid: &HyperGrid, max_order: usize, ordering: &OrderingStrategy) -> KeyStream {
    ordering.key_stream(grid, max_order, &[])
}

/// `psi_i^z(x_k) = 1{x_k,i = z} - 1{x_k,i = N_i - 1}` on every support row.
pub fn evaluate_psi<T: Scalar>(dist: &EmpiricalDistribution<T>, feature: usize, level: Category) -> Result<Vec<T>> {
    if feature >= dist.dims() {
        return Err(AnovaError::FeatureOutOfRange {
            feature,
            dims: dist.dims(),
        });
    }
    let last = dist.grid().cardinality(feature) - 1;
    if level >= last {
        return Err(AnovaError::InvalidKey {
            key: format!("psi_{feature}^{level}"),
            reason: format!("level outside truncated range 0..{last}"),
        });
    }
    Ok((0..dist.support_size())
        .map(|k| {
            let x = dist.value(k, feature);
            if x == level {
                T::one()
            } else if x == last {
                -T::one()
            } else {
                T::zero()
            }
        })
        .collect())
}

/// Sign pattern `prod_i psi_i^{z_i}(x_k)` in {-1, 0, 1}.
#[inline]
pub(crate) fn numerator_sign(dist_row: &[Category], key: &IndexKey, cardinalities: &[u32]) -> i8 {
    let mut sign = 1i8;
    for (&i, &z) in key.subset.iter().zip(&key.levels) {
        let x = dist_row[i];
        if x == z {
            continue;
        }
        if x == cardinalities[i] - 1 {
            sign = -sign;
        } else {
            return 0;
        }
    }
    sign
}

/// Evaluates `phi_A^z` on the support, reusing a marginal table for `A`.
pub(crate) fn phi_with_marginal<T: Scalar>(
    dist: &EmpiricalDistribution<T>,
    key: &IndexKey,
    marginal: &MarginalTable<T>,
) -> Vec<T> {
    let cards = dist.grid().cardinalities();
    dist.rows()
        .enumerate()
        .map(|(k, row)| match numerator_sign(row, key, cards) {
            0 => T::zero(),
            s => {
                let p = marginal.row_prob(k);
                if s > 0 {
                    p.recip()
                } else {
                    -p.recip()
                }
            }
        })
        .collect()
}

/// Evaluates the basis function of `key` on every support row.
/// The empty key yields the all-ones column.
pub fn evaluate_phi<T: Scalar>(dist: &EmpiricalDistribution<T>, key: &IndexKey) -> Result<BasisColumn<T>> {
    key.validate(dist.grid())?;
    let marginal = dist.marginal(key.subset())?;
    Ok(BasisColumn {
        key: key.clone(),
        values: phi_with_marginal(dist, key, &marginal),
    })
}
