//! Greedy rank-based construction of a decomposition basis.
//!
//! Candidate keys are scanned in the order given by an [`OrderingStrategy`];
//! a candidate is kept iff its column strictly increases the numerical rank
//! of the kept set. Rank is tracked incrementally by weighted Gram–Schmidt
//! with one reorthogonalization pass, so each test costs `O(k r)`.

use std::sync::Arc;

use log::warn;
use rayon::prelude::*;

use crate::basis::{phi_with_marginal, IndexKey, KeyStream, SubsetStream};
use crate::distribution::{EmpiricalDistribution, HyperGrid};
use crate::error::{AnovaError, Result};
use crate::scalar::{axpy, weighted_dot, Scalar};

/// Order in which candidate keys are offered to the rank test.
///
/// Every strategy is graded by subset cardinality (all singletons before any
/// pair, and so on) and only produces families closed under taking subsets.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum OrderingStrategy {
    /// Cardinality first, then lexicographic in `A`, then in `z`.
    #[default]
    Canonical,
    /// Features combined in the given priority order; unlisted features
    /// follow in index order.
    VarianceRanked { ranking: Vec<usize> },
    /// Interactions restricted to cliques of a symmetric adjacency
    /// (`adjacency[i]` sorted list of neighbors of `i`).
    Neighborhood { adjacency: Arc<Vec<Vec<usize>>> },
}

impl OrderingStrategy {
    /// Ranks features by the weighted variance of `E[f | X_i]`, largest first.
    /// Ties keep index order.
    pub fn variance_ranked<T: Scalar>(dist: &EmpiricalDistribution<T>, f_values: &[T]) -> Result<Self> {
        let scores = main_effect_scores(dist, f_values)?;
        let mut ranking: Vec<usize> = (0..dist.dims()).collect();
        ranking.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        Ok(Self::VarianceRanked { ranking })
    }

    /// Builds a symmetric neighborhood ordering from per-feature neighbor lists.
    pub fn neighborhood(dims: usize, neighbors: &[Vec<usize>]) -> Result<Self> {
        let mut adjacency = vec![Vec::new(); dims];
        for (i, list) in neighbors.iter().enumerate() {
            if i >= dims {
                return Err(AnovaError::FeatureOutOfRange { feature: i, dims });
            }
            for &j in list {
                if j >= dims {
                    return Err(AnovaError::FeatureOutOfRange { feature: j, dims });
                }
                if i != j {
                    adjacency[i].push(j);
                    adjacency[j].push(i);
                }
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self::Neighborhood {
            adjacency: Arc::new(adjacency),
        })
    }

    /// Key stream over features with `N_i ≥ 2` that are not `excluded`.
    pub fn key_stream(&self, grid: &HyperGrid, max_order: usize, excluded: &[usize]) -> KeyStream {
        let keep = |i: &usize| grid.cardinality(*i) >= 2 && !excluded.contains(i);
        let (order, adjacency) = match self {
            Self::Canonical => ((0..grid.dims()).filter(keep).collect(), None),
            Self::VarianceRanked { ranking } => {
                let mut order: Vec<usize> = Vec::with_capacity(grid.dims());
                for &i in ranking {
                    if i < grid.dims() && !order.contains(&i) {
                        order.push(i);
                    }
                }
                for i in 0..grid.dims() {
                    if !order.contains(&i) {
                        order.push(i);
                    }
                }
                (order.into_iter().filter(keep).collect(), None)
            }
            Self::Neighborhood { adjacency } => (
                (0..grid.dims()).filter(keep).collect(),
                Some(Arc::clone(adjacency)),
            ),
        };
        let max_size = max_order.min(grid.dims());
        KeyStream::new(grid, SubsetStream::new(order, adjacency, max_size))
    }

    fn is_exhaustive(&self) -> bool {
        !matches!(self, Self::Neighborhood { .. })
    }
}

/// Which columns carry the fitted components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ColumnBasis {
    /// Each selected column with the functions of its strict sub-subsets
    /// projected out. Identical to the closed form whenever the support's
    /// projection on the key's subset is rectangular (full support,
    /// independent or Boolean-uniform inputs), and hierarchically orthogonal
    /// on every support.
    #[default]
    Hierarchical,
    /// The signed inverse likelihood columns as defined.
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionConfig<T> {
    pub max_order: usize,
    /// Maximum number of selected keys; `None` means the support size `r`.
    pub rank_budget: Option<usize>,
    pub rank_tolerance: T,
    pub ordering: OrderingStrategy,
    pub prune_inactive: bool,
    pub prune_threshold: T,
    pub basis: ColumnBasis,
}

impl<T: Scalar> SelectionConfig<T> {
    /// Full-order, full-rank configuration with canonical ordering.
    pub fn full(dims: usize) -> Self {
        Self {
            max_order: dims,
            rank_budget: None,
            rank_tolerance: T::default_tolerance(),
            ordering: OrderingStrategy::Canonical,
            prune_inactive: false,
            prune_threshold: T::of(0.01),
            basis: ColumnBasis::Hierarchical,
        }
    }

    pub fn with_max_order(mut self, max_order: usize) -> Self {
        self.max_order = max_order;
        self
    }

    pub fn with_budget(mut self, budget: usize) -> Self {
        self.rank_budget = Some(budget);
        self
    }

    pub fn with_ordering(mut self, ordering: OrderingStrategy) -> Self {
        self.ordering = ordering;
        self
    }

    pub fn with_basis(mut self, basis: ColumnBasis) -> Self {
        self.basis = basis;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank_budget == Some(0) {
            return Err(AnovaError::InvalidConfig("rank budget must be at least 1".into()));
        }
        if !(self.rank_tolerance > T::zero()) {
            return Err(AnovaError::InvalidConfig("rank tolerance must be positive".into()));
        }
        if !(self.prune_threshold >= T::zero() && self.prune_threshold < T::one()) {
            return Err(AnovaError::InvalidConfig("prune threshold must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Output of [`greedy_select`].
#[derive(Debug, Clone, PartialEq)]
pub struct SelectedBasis {
    pub keys: Vec<IndexKey>,
    pub achieved_rank: usize,
    pub scanned: usize,
    pub pruned_features: Vec<usize>,
}

/// Outcome of offering one column to a [`RankTracker`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankStep<T> {
    pub accepted: bool,
    pub residual_norm: T,
}

/// Incremental weighted Gram–Schmidt rank test.
#[derive(Debug, Clone)]
pub struct RankTracker<T> {
    weights: Vec<T>,
    tolerance: T,
    basis: Vec<Vec<T>>,
}

impl<T: Scalar> RankTracker<T> {
    pub fn new(weights: &[T], tolerance: T) -> Self {
        Self {
            weights: weights.to_vec(),
            tolerance,
            basis: Vec::new(),
        }
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    /// Orthonormal basis (under the weighted inner product) of the accepted span.
    pub fn orthonormal_basis(&self) -> &[Vec<T>] {
        &self.basis
    }

    /// Orthogonalizes `column` against the accepted span; accepts it iff the
    /// residual norm exceeds `tolerance × ‖column‖`.
    pub fn add(&mut self, column: &[T]) -> Result<RankStep<T>> {
        if column.len() != self.weights.len() {
            return Err(AnovaError::LengthMismatch {
                expected: self.weights.len(),
                found: column.len(),
            });
        }
        let norm = weighted_dot(&self.weights, column, column).sqrt();
        let mut residual = column.to_vec();
        for _pass in 0..2 {
            for q in &self.basis {
                let h = weighted_dot(&self.weights, q, &residual);
                axpy(-h, q, &mut residual);
            }
        }
        let residual_norm = weighted_dot(&self.weights, &residual, &residual).sqrt();
        let accepted = norm > T::zero() && residual_norm > self.tolerance * norm;
        if accepted {
            let inv = residual_norm.recip();
            residual.iter_mut().for_each(|v| *v = *v * inv);
            self.basis.push(residual);
        }
        Ok(RankStep {
            accepted,
            residual_norm,
        })
    }
}

/// Convenience wrapper matching the tracker's single-step contract.
pub fn rank_tracker_add<T: Scalar>(tracker: &mut RankTracker<T>, column: &[T]) -> Result<RankStep<T>> {
    tracker.add(column)
}

/// Features whose empirical distribution is within `threshold` of a point
/// mass, plus every single-category feature.
pub fn prune_inactive<T: Scalar>(dist: &EmpiricalDistribution<T>, threshold: T) -> Result<Vec<usize>> {
    let mut pruned = Vec::new();
    for i in 0..dist.dims() {
        if dist.grid().cardinality(i) < 2 {
            pruned.push(i);
            continue;
        }
        let marginal = dist.marginal(&[i])?;
        let top = marginal
            .probabilities()
            .iter()
            .fold(T::zero(), |m, &p| m.max(p));
        if marginal.len() < 2 || top >= T::one() - threshold - T::weight_sum_tolerance() {
            pruned.push(i);
        }
    }
    Ok(pruned)
}

/// Weighted variance of the conditional mean `E[f | X_i]` for every feature.
pub fn main_effect_scores<T: Scalar>(dist: &EmpiricalDistribution<T>, f_values: &[T]) -> Result<Vec<T>> {
    let mean = dist.mean(f_values)?;
    (0..dist.dims())
        .map(|i| {
            let marginal = dist.marginal(&[i])?;
            let mut sums = vec![T::zero(); marginal.len()];
            for (k, &c) in marginal.row_cells().iter().enumerate() {
                sums[c] = sums[c] + dist.weight(k) * f_values[k];
            }
            Ok(sums
                .iter()
                .zip(marginal.probabilities())
                .map(|(&s, &p)| {
                    let dev = s / p - mean;
                    p * dev * dev
                })
                .sum())
        })
        .collect()
}

const PREFETCH: usize = 64;

/// Greedy rank-based basis selection over the support of `dist`.
///
/// Starts from the empty key and walks the configured ordering, keeping each
/// candidate that increases the numerical rank, until the budget (default
/// `r`) is met or the candidates run out. Depends only on the distribution
/// and the configuration.
pub fn greedy_select<T: Scalar>(dist: &EmpiricalDistribution<T>, config: &SelectionConfig<T>) -> Result<SelectedBasis> {
    config.validate()?;
    let r = dist.support_size();
    let budget = match config.rank_budget {
        Some(b) if b > r => {
            warn!("rank budget {b} exceeds support size {r}; clamping to {r}");
            r
        }
        Some(b) => b,
        None => r,
    };
    let pruned = if config.prune_inactive {
        prune_inactive(dist, config.prune_threshold)?
    } else {
        Vec::new()
    };

    let mut stream = config.ordering.key_stream(dist.grid(), config.max_order, &pruned);
    let mut tracker = RankTracker::new(dist.weights(), config.rank_tolerance);
    let mut keys = Vec::new();
    let mut scanned = 0usize;

    'scan: while keys.len() < budget {
        let batch: Vec<IndexKey> = stream.by_ref().take(PREFETCH).collect();
        if batch.is_empty() {
            break;
        }
        let columns = batch
            .par_iter()
            .map(|key| {
                let marginal = dist.marginal(key.subset())?;
                Ok(phi_with_marginal(dist, key, &marginal))
            })
            .collect::<Result<Vec<_>>>()?;
        for (key, column) in batch.into_iter().zip(columns) {
            scanned += 1;
            if tracker.add(&column)?.accepted {
                keys.push(key);
                if keys.len() == budget {
                    break 'scan;
                }
            }
        }
    }

    let exhaustive = config.max_order >= dist.dims() && pruned.is_empty() && config.ordering.is_exhaustive();
    if exhaustive && budget == r && keys.len() < r {
        return Err(AnovaError::Internal(format!(
            "full index space spans only rank {} of support size {r}",
            keys.len()
        )));
    }
    Ok(SelectedBasis {
        achieved_rank: keys.len(),
        keys,
        scanned,
        pruned_features: pruned,
    })
}
