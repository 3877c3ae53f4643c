//! Empirical categorical distributions over a finite hypergrid.
//!
//! An [`EmpiricalDistribution`] is the observed support (the distinct rows of
//! a dataset, sorted lexicographically) together with strictly positive
//! probability weights. Marginal probability tables `p_A` are computed lazily
//! and memoized per feature subset.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, RwLock};

use crate::error::{AnovaError, Result};
use crate::scalar::{weighted_dot, Scalar};

/// Category index of one feature value. Categories are dense: `0..N_i`.
pub type Category = u32;

/// The full Cartesian grid of category values, one cardinality per feature.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HyperGrid {
    cardinalities: Vec<u32>,
}

impl HyperGrid {
    pub fn new(cardinalities: Vec<u32>) -> Result<Self> {
        if let Some(i) = cardinalities.iter().position(|&n| n == 0) {
            return Err(AnovaError::InvalidGrid(format!(
                "feature {i} has zero categories"
            )));
        }
        Ok(Self { cardinalities })
    }

    pub fn dims(&self) -> usize {
        self.cardinalities.len()
    }

    pub fn cardinality(&self, feature: usize) -> u32 {
        self.cardinalities[feature]
    }

    pub fn cardinalities(&self) -> &[u32] {
        &self.cardinalities
    }

    /// `|E| = ∏ N_i`, or [`AnovaError::Overflow`] when it exceeds `u128`.
    pub fn size(&self) -> Result<u128> {
        self.cardinalities
            .iter()
            .try_fold(1u128, |acc, &n| acc.checked_mul(n as u128))
            .ok_or(AnovaError::Overflow)
    }

    /// Features that can carry basis functions (`N_i ≥ 2`).
    pub fn active_features(&self) -> Vec<usize> {
        (0..self.dims())
            .filter(|&i| self.cardinalities[i] >= 2)
            .collect()
    }

    fn check_row(&self, row: &[Category]) -> Result<()> {
        if row.len() != self.dims() {
            return Err(AnovaError::RowWidth {
                row: 0,
                found: row.len(),
                expected: self.dims(),
            });
        }
        for (i, (&x, &n)) in row.iter().zip(&self.cardinalities).enumerate() {
            if x >= n {
                return Err(AnovaError::CategoryOutOfRange {
                    feature: i,
                    value: x,
                    cardinality: n,
                });
            }
        }
        Ok(())
    }
}

/// Marginal probabilities `p_A(x_A)` over the observed projections of the
/// support onto a feature subset `A`.
#[derive(Debug, Clone)]
pub struct MarginalTable<T> {
    subset: Vec<usize>,
    cells: Vec<Vec<Category>>,
    probs: Vec<T>,
    row_cell: Vec<usize>,
}

impl<T: Scalar> MarginalTable<T> {
    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    /// Distinct observed projections, sorted lexicographically.
    pub fn cells(&self) -> &[Vec<Category>] {
        &self.cells
    }

    pub fn probabilities(&self) -> &[T] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// `p_A(x_A)`, or `None` when the projection was never observed.
    pub fn prob(&self, projection: &[Category]) -> Option<T> {
        self.cells
            .binary_search_by(|c| c.as_slice().cmp(projection))
            .ok()
            .map(|c| self.probs[c])
    }

    /// Cell index of support row `k`.
    pub fn cell_of_row(&self, k: usize) -> usize {
        self.row_cell[k]
    }

    /// Cell index of every support row.
    pub fn row_cells(&self) -> &[usize] {
        &self.row_cell
    }

    /// `p_A((x_k)_A)` for support row `k`.
    pub fn row_prob(&self, k: usize) -> T {
        self.probs[self.row_cell[k]]
    }
}

/// Observed support with strictly positive weights summing to one.
pub struct EmpiricalDistribution<T> {
    grid: HyperGrid,
    support: Vec<Category>,
    weights: Vec<T>,
    marginals: RwLock<HashMap<Vec<usize>, Arc<MarginalTable<T>>>>,
}

impl<T: Scalar> Clone for EmpiricalDistribution<T> {
    fn clone(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            support: self.support.clone(),
            weights: self.weights.clone(),
            marginals: RwLock::new(HashMap::new()),
        }
    }
}

impl<T> fmt::Debug for EmpiricalDistribution<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EmpiricalDistribution")
            .field("grid", &self.grid)
            .field("support_size", &self.weights.len())
            .finish()
    }
}

impl<T: Scalar> EmpiricalDistribution<T> {
    /// Empirical distribution of a dataset: distinct rows weighted by their
    /// relative frequency. Without a grid, `N_i = 1 + max observed category`.
    pub fn from_dataset<R: AsRef<[Category]>>(rows: &[R], grid: Option<HyperGrid>) -> Result<Self> {
        let ones = vec![T::one(); rows.len()];
        Self::from_weighted_rows(rows, &ones, grid)
    }

    /// Like [`from_dataset`](Self::from_dataset) with a non-negative sample
    /// weight per row. Rows with zero weight are dropped.
    pub fn from_weighted_rows<R: AsRef<[Category]>>(
        rows: &[R],
        sample_weights: &[T],
        grid: Option<HyperGrid>,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(AnovaError::EmptyInput("dataset has no rows"));
        }
        if sample_weights.len() != rows.len() {
            return Err(AnovaError::LengthMismatch {
                expected: rows.len(),
                found: sample_weights.len(),
            });
        }
        let d = rows[0].as_ref().len();
        for (k, row) in rows.iter().enumerate() {
            if row.as_ref().len() != d {
                return Err(AnovaError::RowWidth {
                    row: k,
                    found: row.as_ref().len(),
                    expected: d,
                });
            }
        }
        let grid = match grid {
            Some(grid) => {
                if grid.dims() != d {
                    return Err(AnovaError::InvalidGrid(format!(
                        "grid has {} features, rows have {d}",
                        grid.dims()
                    )));
                }
                for (k, row) in rows.iter().enumerate() {
                    grid.check_row(row.as_ref()).map_err(|e| match e {
                        AnovaError::RowWidth { found, expected, .. } => AnovaError::RowWidth {
                            row: k,
                            found,
                            expected,
                        },
                        other => other,
                    })?;
                }
                grid
            }
            None => {
                let mut cards = vec![1u32; d];
                for row in rows {
                    for (n, &x) in cards.iter_mut().zip(row.as_ref()) {
                        *n = (*n).max(x + 1);
                    }
                }
                HyperGrid::new(cards)?
            }
        };

        let mut totals: HashMap<&[Category], T> = HashMap::new();
        let mut total = T::zero();
        for (row, &w) in rows.iter().zip(sample_weights) {
            if !w.is_finite() || w < T::zero() {
                return Err(AnovaError::InvalidWeights(format!(
                    "sample weight {w} is negative or not finite"
                )));
            }
            if w > T::zero() {
                let entry = totals.entry(row.as_ref()).or_insert_with(T::zero);
                *entry = *entry + w;
                total = total + w;
            }
        }
        if totals.is_empty() {
            return Err(AnovaError::InvalidWeights("all sample weights are zero".into()));
        }
        let mut distinct: Vec<(&[Category], T)> = totals.into_iter().collect();
        distinct.sort_unstable_by(|a, b| a.0.cmp(b.0));

        let mut support = Vec::with_capacity(distinct.len() * d);
        let mut weights = Vec::with_capacity(distinct.len());
        for (row, w) in distinct {
            support.extend_from_slice(row);
            weights.push(w / total);
        }
        Ok(Self::assemble(grid, support, weights))
    }

    /// Distribution from an explicit support and its probabilities, used as
    /// given (no renormalization). Rows are sorted together with their weights.
    pub fn from_support<R: AsRef<[Category]>>(grid: HyperGrid, rows: &[R], weights: &[T]) -> Result<Self> {
        if rows.is_empty() {
            return Err(AnovaError::EmptyInput("support has no rows"));
        }
        if rows.len() != weights.len() {
            return Err(AnovaError::LengthMismatch {
                expected: rows.len(),
                found: weights.len(),
            });
        }
        for (k, row) in rows.iter().enumerate() {
            grid.check_row(row.as_ref()).map_err(|e| match e {
                AnovaError::RowWidth { found, expected, .. } => AnovaError::RowWidth {
                    row: k,
                    found,
                    expected,
                },
                other => other,
            })?;
        }
        let mut sum = T::zero();
        for &w in weights {
            if !(w > T::zero()) || !w.is_finite() {
                return Err(AnovaError::InvalidWeights(format!(
                    "support weight {w} is not strictly positive"
                )));
            }
            sum = sum + w;
        }
        if (sum - T::one()).abs() > T::weight_sum_tolerance() {
            return Err(AnovaError::InvalidWeights(format!(
                "support weights sum to {sum}, expected 1"
            )));
        }
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by(|&a, &b| rows[a].as_ref().cmp(rows[b].as_ref()));
        for pair in order.windows(2) {
            if rows[pair[0]].as_ref() == rows[pair[1]].as_ref() {
                return Err(AnovaError::DuplicateSupportRow(pair[0].max(pair[1])));
            }
        }
        let mut support = Vec::with_capacity(rows.len() * grid.dims());
        let mut sorted_weights = Vec::with_capacity(rows.len());
        for &k in &order {
            support.extend_from_slice(rows[k].as_ref());
            sorted_weights.push(weights[k]);
        }
        Ok(Self::assemble(grid, support, sorted_weights))
    }

    fn assemble(grid: HyperGrid, support: Vec<Category>, weights: Vec<T>) -> Self {
        Self {
            grid,
            support,
            weights,
            marginals: RwLock::new(HashMap::new()),
        }
    }

    pub fn grid(&self) -> &HyperGrid {
        &self.grid
    }

    pub fn dims(&self) -> usize {
        self.grid.dims()
    }

    /// Number of distinct support rows `r`.
    pub fn support_size(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn weight(&self, k: usize) -> T {
        self.weights[k]
    }

    /// Support row `k`.
    pub fn row(&self, k: usize) -> &[Category] {
        let d = self.dims();
        &self.support[k * d..(k + 1) * d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[Category]> + '_ {
        (0..self.support_size()).map(move |k| self.row(k))
    }

    /// Category of feature `i` in support row `k`.
    #[inline]
    pub fn value(&self, k: usize, i: usize) -> Category {
        self.support[k * self.dims() + i]
    }

    /// Position of `x` in the support.
    pub fn row_index(&self, x: &[Category]) -> Option<usize> {
        if x.len() != self.dims() {
            return None;
        }
        let (mut lo, mut hi) = (0, self.support_size());
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.row(mid).cmp(x) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return Some(mid),
            }
        }
        None
    }

    /// Marginal table of the feature subset `A` (any order, no repeats).
    pub fn marginal(&self, subset: &[usize]) -> Result<Arc<MarginalTable<T>>> {
        let mut key = subset.to_vec();
        key.sort_unstable();
        for pair in key.windows(2) {
            if pair[0] == pair[1] {
                return Err(AnovaError::InvalidConfig(format!(
                    "feature {} repeated in subset",
                    pair[0]
                )));
            }
        }
        if let Some(&i) = key.iter().find(|&&i| i >= self.dims()) {
            return Err(AnovaError::FeatureOutOfRange {
                feature: i,
                dims: self.dims(),
            });
        }
        if let Some(table) = self.marginals.read().expect("marginal cache poisoned").get(&key) {
            return Ok(Arc::clone(table));
        }
        let table = Arc::new(self.compute_marginal(key.clone()));
        let mut cache = self.marginals.write().expect("marginal cache poisoned");
        Ok(Arc::clone(cache.entry(key).or_insert(table)))
    }

    fn compute_marginal(&self, subset: Vec<usize>) -> MarginalTable<T> {
        let r = self.support_size();
        let mut ids: HashMap<Vec<Category>, usize> = HashMap::new();
        let mut raw_cell = Vec::with_capacity(r);
        let mut sums: Vec<T> = Vec::new();
        for k in 0..r {
            let projection: Vec<Category> = subset.iter().map(|&i| self.value(k, i)).collect();
            let next = ids.len();
            let id = *ids.entry(projection).or_insert(next);
            if id == sums.len() {
                sums.push(T::zero());
            }
            sums[id] = sums[id] + self.weights[k];
            raw_cell.push(id);
        }
        let mut cells: Vec<(Vec<Category>, usize)> = ids.into_iter().collect();
        cells.sort_unstable();
        let mut remap = vec![0; cells.len()];
        for (sorted, (_, raw)) in cells.iter().enumerate() {
            remap[*raw] = sorted;
        }
        let probs = cells.iter().map(|(_, raw)| sums[*raw]).collect();
        MarginalTable {
            subset,
            cells: cells.into_iter().map(|(c, _)| c).collect(),
            probs,
            row_cell: raw_cell.into_iter().map(|id| remap[id]).collect(),
        }
    }

    /// `Σ_k w_k u_k v_k` over the support.
    pub fn inner_product(&self, u: &[T], v: &[T]) -> Result<T> {
        self.check_len(u)?;
        self.check_len(v)?;
        Ok(weighted_dot(&self.weights, u, v))
    }

    /// Weighted mean `E[f]`.
    pub fn mean(&self, f: &[T]) -> Result<T> {
        self.check_len(f)?;
        Ok(self.weights.iter().zip(f).fold(T::zero(), |acc, (&w, &x)| acc + w * x))
    }

    pub(crate) fn check_len(&self, v: &[T]) -> Result<()> {
        if v.len() != self.support_size() {
            return Err(AnovaError::LengthMismatch {
                expected: self.support_size(),
                found: v.len(),
            });
        }
        Ok(())
    }
}
