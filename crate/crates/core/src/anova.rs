//! Assembled functional ANOVA decomposition and the services built on it:
//! component norms, Shapley attributions, global importances and
//! reconstruction diagnostics.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::basis::{evaluate_phi, IndexKey};
use crate::distribution::{Category, EmpiricalDistribution};
use crate::error::{AnovaError, Result};
use crate::gram::{least_squares_coefficients, CoefficientVector};
use crate::hierarchy::hierarchical_columns;
use crate::scalar::{axpy, weighted_dot, Scalar};
use crate::selection::{greedy_select, ColumnBasis, SelectedBasis, SelectionConfig};

/// Feature subset identifying a component; sorted, possibly empty.
pub type Subset = Vec<usize>;

/// `f = f_∅ + Σ_A f_A` on the support, with every component materialized.
#[derive(Debug, Clone)]
pub struct Decomposition<T> {
    dist: Arc<EmpiricalDistribution<T>>,
    selection: SelectedBasis,
    basis: ColumnBasis,
    coefficients: CoefficientVector<T>,
    intercept: T,
    components: BTreeMap<Subset, Vec<T>>,
    fitted: Vec<T>,
    elapsed: Duration,
}

/// Shapley attribution of one support row.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributionVector<T> {
    pub row: Vec<Category>,
    pub shap: Vec<T>,
    pub baseline: T,
    pub fitted: T,
}

impl<T: Scalar> AttributionVector<T> {
    /// `baseline + Σ shap - fitted`; zero up to rounding.
    pub fn efficiency_gap(&self) -> T {
        self.baseline + self.shap.iter().copied().sum::<T>() - self.fitted
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsReport<T> {
    /// `1 - mse / Var(f)`; `None` when `Var(f) = 0` and the fit is not exact.
    pub r_squared: Option<T>,
    pub mse: T,
    /// `mse / E[f²]`; `None` when `f ≡ 0`.
    pub relative_mse: Option<T>,
    pub variance: T,
    pub component_norms: BTreeMap<Subset, T>,
    pub orthogonality_metric: T,
    pub achieved_rank: usize,
    pub support_size: usize,
    pub scanned: usize,
    pub wall_time: Duration,
}

/// Selects a basis, solves for the coefficients and groups them by subset.
pub fn decompose<T: Scalar>(
    dist: &Arc<EmpiricalDistribution<T>>,
    f_values: &[T],
    config: &SelectionConfig<T>,
) -> Result<Decomposition<T>> {
    let start = Instant::now();
    dist.check_len(f_values)?;
    let selection = greedy_select(dist, config)?;
    let columns = component_columns(dist, &selection.keys, config.basis)?;
    let coefficients = least_squares_coefficients(
        dist,
        f_values,
        selection.keys.clone(),
        &columns,
        T::default_tolerance(),
    )?;
    let mut dec = Decomposition::from_columns(Arc::clone(dist), selection, config.basis, coefficients, &columns)?;
    dec.elapsed = start.elapsed();
    Ok(dec)
}

fn component_columns<T: Scalar>(
    dist: &EmpiricalDistribution<T>,
    keys: &[IndexKey],
    basis: ColumnBasis,
) -> Result<Vec<Vec<T>>> {
    match basis {
        ColumnBasis::Hierarchical => hierarchical_columns(dist, keys),
        ColumnBasis::ClosedForm => keys
            .par_iter()
            .map(|k| evaluate_phi(dist, k).map(|c| c.values))
            .collect(),
    }
}

impl<T: Scalar> Decomposition<T> {
    /// Rebuilds a decomposition from stored keys and coefficients.
    pub fn assemble(
        dist: Arc<EmpiricalDistribution<T>>,
        selection: SelectedBasis,
        basis: ColumnBasis,
        coefficients: CoefficientVector<T>,
    ) -> Result<Self> {
        let columns = component_columns(&dist, &coefficients.keys, basis)?;
        Self::from_columns(dist, selection, basis, coefficients, &columns)
    }

    fn from_columns(
        dist: Arc<EmpiricalDistribution<T>>,
        selection: SelectedBasis,
        basis: ColumnBasis,
        coefficients: CoefficientVector<T>,
        columns: &[Vec<T>],
    ) -> Result<Self> {
        if columns.len() != coefficients.keys.len() {
            return Err(AnovaError::LengthMismatch {
                expected: coefficients.keys.len(),
                found: columns.len(),
            });
        }
        let r = dist.support_size();
        let mut intercept = T::zero();
        let mut components: BTreeMap<Subset, Vec<T>> = BTreeMap::new();
        for ((key, c), column) in coefficients.iter().zip(columns) {
            if key.is_empty() {
                intercept = intercept + c * column[0];
                continue;
            }
            let target = components
                .entry(key.subset().to_vec())
                .or_insert_with(|| vec![T::zero(); r]);
            axpy(c, column, target);
        }
        let mut fitted = vec![intercept; r];
        for values in components.values() {
            for (y, &v) in fitted.iter_mut().zip(values) {
                *y = *y + v;
            }
        }
        Ok(Self {
            dist,
            selection,
            basis,
            coefficients,
            intercept,
            components,
            fitted,
            elapsed: Duration::ZERO,
        })
    }

    pub fn distribution(&self) -> &Arc<EmpiricalDistribution<T>> {
        &self.dist
    }

    pub fn selection(&self) -> &SelectedBasis {
        &self.selection
    }

    pub fn column_basis(&self) -> ColumnBasis {
        self.basis
    }

    pub fn coefficients(&self) -> &CoefficientVector<T> {
        &self.coefficients
    }

    /// `f_∅`, the constant term.
    pub fn intercept(&self) -> T {
        self.intercept
    }

    /// Non-empty components keyed by subset.
    pub fn components(&self) -> &BTreeMap<Subset, Vec<T>> {
        &self.components
    }

    pub fn component(&self, subset: &[usize]) -> Option<&[T]> {
        self.components.get(subset).map(Vec::as_slice)
    }

    /// Components including `∅ ↦ f_∅·1`.
    pub fn components_with_intercept(&self) -> BTreeMap<Subset, Vec<T>> {
        let mut all = self.components.clone();
        all.insert(Vec::new(), vec![self.intercept; self.dist.support_size()]);
        all
    }

    /// Reconstruction `f̂` on the support rows.
    pub fn fitted(&self) -> &[T] {
        &self.fitted
    }

    pub fn elapsed(&self) -> Duration {
        self.elapsed
    }

    /// `‖f_A‖²` for every component; the intercept contributes `f_∅²`.
    pub fn component_norms(&self) -> BTreeMap<Subset, T> {
        let w = self.dist.weights();
        let mut norms: BTreeMap<Subset, T> = self
            .components
            .iter()
            .map(|(a, v)| (a.clone(), weighted_dot(w, v, v)))
            .collect();
        norms.insert(Vec::new(), self.intercept * self.intercept);
        norms
    }

    /// Shapley values of support row `k`: `shap_i = Σ_{A ∋ i} f_A(x)/|A|`.
    pub fn shapley_row(&self, k: usize) -> AttributionVector<T> {
        let mut shap = vec![T::zero(); self.dist.dims()];
        for (subset, values) in &self.components {
            let share = values[k] / T::of_usize(subset.len());
            for &i in subset {
                shap[i] = shap[i] + share;
            }
        }
        AttributionVector {
            row: self.dist.row(k).to_vec(),
            shap,
            baseline: self.intercept,
            fitted: self.fitted[k],
        }
    }

    /// Shapley values of a query row, which must lie in the support.
    pub fn shapley(&self, x: &[Category]) -> Result<AttributionVector<T>> {
        let k = self
            .dist
            .row_index(x)
            .ok_or_else(|| AnovaError::OutOfSupport(x.to_vec()))?;
        Ok(self.shapley_row(k))
    }

    /// `‖f_i‖₁ = Σ_c |f_i(c)| p_i(c)` over the categories of feature `i`.
    pub fn global_importance(&self, feature: usize) -> Result<T> {
        if feature >= self.dist.dims() {
            return Err(AnovaError::FeatureOutOfRange {
                feature,
                dims: self.dist.dims(),
            });
        }
        let Some(values) = self.components.get(&vec![feature]) else {
            return Ok(T::zero());
        };
        let marginal = self.dist.marginal(&[feature])?;
        let mut representative = vec![usize::MAX; marginal.len()];
        for (k, &c) in marginal.row_cells().iter().enumerate() {
            if representative[c] == usize::MAX {
                representative[c] = k;
            }
        }
        Ok(representative
            .iter()
            .zip(marginal.probabilities())
            .map(|(&k, &p)| values[k].abs() * p)
            .sum())
    }

    /// `max_{B ⊊ A} |⟨f_A, f_B⟩|` over the selected subsets, intercept included.
    pub fn orthogonality_metric(&self) -> T {
        let all = self.components_with_intercept();
        let w = self.dist.weights();
        let subsets: Vec<&Subset> = all.keys().collect();
        let mut worst = T::zero();
        for a in &subsets {
            for b in &subsets {
                if b.len() < a.len() && b.iter().all(|i| a.binary_search(i).is_ok()) {
                    worst = worst.max(weighted_dot(w, &all[*a], &all[*b]).abs());
                }
            }
        }
        worst
    }

    /// Reconstruction quality against the explained values `f`.
    pub fn metrics(&self, f_values: &[T]) -> Result<DiagnosticsReport<T>> {
        self.dist.check_len(f_values)?;
        let quality = fit_quality(self.dist.weights(), f_values, &self.fitted)?;
        Ok(DiagnosticsReport {
            r_squared: quality.r_squared,
            mse: quality.mse,
            relative_mse: quality.relative_mse,
            variance: quality.variance,
            component_norms: self.component_norms(),
            orthogonality_metric: self.orthogonality_metric(),
            achieved_rank: self.selection.achieved_rank,
            support_size: self.dist.support_size(),
            scanned: self.selection.scanned,
            wall_time: self.elapsed,
        })
    }
}

/// Weighted reconstruction error of `fitted` against `targets`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitQuality<T> {
    pub mse: T,
    pub variance: T,
    pub second_moment: T,
    /// `1 - mse / variance`; exactly 1 for a constant target fitted exactly,
    /// `None` for a constant target fitted inexactly.
    pub r_squared: Option<T>,
    /// `mse / E[f²]`; `None` when `f ≡ 0`.
    pub relative_mse: Option<T>,
}

/// Weights must sum to one.
pub fn fit_quality<T: Scalar>(weights: &[T], targets: &[T], fitted: &[T]) -> Result<FitQuality<T>> {
    for len in [targets.len(), fitted.len()] {
        if len != weights.len() {
            return Err(AnovaError::LengthMismatch {
                expected: weights.len(),
                found: len,
            });
        }
    }
    let residual: Vec<T> = targets.iter().zip(fitted).map(|(&a, &b)| a - b).collect();
    let mse = weighted_dot(weights, &residual, &residual);
    let mean = weighted_dot(weights, targets, &vec![T::one(); targets.len()]);
    let centered: Vec<T> = targets.iter().map(|&v| v - mean).collect();
    let variance = weighted_dot(weights, &centered, &centered);
    let second_moment = weighted_dot(weights, targets, targets);
    // rounding alone leaves squared errors of order (n·eps)² · E[f²]
    let noise = T::of_usize(weights.len().max(1)) * T::epsilon();
    let exact = mse <= noise * noise * second_moment.max(T::one());
    let variance = if variance <= noise * noise * second_moment {
        T::zero()
    } else {
        variance
    };
    let r_squared = if variance > T::zero() {
        Some(T::one() - mse / variance)
    } else if exact {
        Some(T::one())
    } else {
        None
    };
    let relative_mse = (second_moment > T::zero()).then(|| mse / second_moment);
    Ok(FitQuality {
        mse,
        variance,
        second_moment,
        r_squared,
        relative_mse,
    })
}

pub fn component_norms<T: Scalar>(dec: &Decomposition<T>) -> BTreeMap<Subset, T> {
    dec.component_norms()
}

pub fn shapley<T: Scalar>(dec: &Decomposition<T>, x: &[Category]) -> Result<AttributionVector<T>> {
    dec.shapley(x)
}

pub fn global_importance<T: Scalar>(dec: &Decomposition<T>, feature: usize) -> Result<T> {
    dec.global_importance(feature)
}

pub fn metrics<T: Scalar>(dec: &Decomposition<T>, f_values: &[T]) -> Result<DiagnosticsReport<T>> {
    dec.metrics(f_values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(cards: &[u32]) -> Arc<EmpiricalDistribution<f64>> {
        let mut rows: Vec<Vec<u32>> = vec![Vec::new()];
        for &n in cards {
            rows = rows
                .into_iter()
                .flat_map(|r| {
                    (0..n).map(move |x| {
                        let mut r = r.clone();
                        r.push(x);
                        r
                    })
                })
                .collect();
        }
        Arc::new(EmpiricalDistribution::from_dataset(&rows, None).unwrap())
    }

    #[test]
    fn constant_function_has_only_intercept() {
        let dist = uniform(&[2, 3]);
        let f = vec![2.5; dist.support_size()];
        let dec = decompose(&dist, &f, &SelectionConfig::full(2)).unwrap();
        assert!((dec.intercept() - 2.5).abs() < 1e-12);
        for v in dec.components().values().flatten() {
            assert!(v.abs() < 1e-12);
        }
        let norms = dec.component_norms();
        assert!((norms[&vec![]] - 6.25).abs() < 1e-12);
        for i in 0..2 {
            assert!(dec.global_importance(i).unwrap() < 1e-12);
        }
        let report = dec.metrics(&f).unwrap();
        assert_eq!(report.r_squared, Some(1.0));
    }

    #[test]
    fn parity_pair_lands_in_pair_component() {
        let dist = uniform(&[2, 2]);
        let f: Vec<f64> = dist
            .rows()
            .map(|x| if (x[0] + x[1]) % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let dec = decompose(&dist, &f, &SelectionConfig::full(2)).unwrap();
        let pair = dec.component(&[0, 1]).unwrap();
        for (a, b) in pair.iter().zip(&f) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(dec.component(&[0]).unwrap().iter().all(|v| v.abs() < 1e-12));
        let attr = dec.shapley(&[0, 1]).unwrap();
        assert!((attr.shap[0] + 0.5).abs() < 1e-12 && (attr.shap[1] + 0.5).abs() < 1e-12);
        assert!(attr.efficiency_gap().abs() < 1e-12);
    }

    #[test]
    fn main_effects_only_fit_of_interaction_explains_nothing() {
        let dist = uniform(&[2, 2]);
        let f: Vec<f64> = dist
            .rows()
            .map(|x| if (x[0] + x[1]) % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let dec = decompose(&dist, &f, &SelectionConfig::full(2).with_max_order(1)).unwrap();
        let report = dec.metrics(&f).unwrap();
        assert!(report.r_squared.unwrap().abs() < 1e-12);
        assert!((report.mse - 1.0).abs() < 1e-12);
    }

    #[test]
    fn importance_of_ternary_main_effect() {
        // f depends on x_0 only through the main effect (-1, 1/3, 2/3) + 1/3
        let dist = uniform(&[3, 2]);
        let effect = [-1.0, 1.0 / 3.0, 2.0 / 3.0];
        let f: Vec<f64> = dist.rows().map(|x| 1.0 / 3.0 + effect[x[0] as usize]).collect();
        let dec = decompose(&dist, &f, &SelectionConfig::full(2)).unwrap();
        assert!((dec.global_importance(0).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!(dec.global_importance(1).unwrap() < 1e-12);
        assert!(dec.global_importance(5).is_err());
    }

    #[test]
    fn out_of_support_query() {
        let dist = Arc::new(EmpiricalDistribution::<f64>::from_dataset(&[[0u32, 0], [1, 1]], None).unwrap());
        let dec = decompose(&dist, &[1.0, 2.0], &SelectionConfig::full(2)).unwrap();
        assert!(matches!(dec.shapley(&[0, 1]), Err(AnovaError::OutOfSupport(_))));
        assert!(dec.shapley(&[1, 1]).is_ok());
    }

    #[test]
    fn zero_variance_inexact_fit_has_undefined_r_squared() {
        let dist = uniform(&[2]);
        let dec = decompose(&dist, &[1.0, 3.0], &SelectionConfig::full(1).with_budget(1)).unwrap();
        let report = dec.metrics(&[2.0, 2.0]).unwrap();
        assert_eq!(report.r_squared, Some(1.0));
        let report = dec.metrics(&[2.0 + 1e-3, 2.0 + 1e-3]).unwrap();
        assert_eq!(report.r_squared, None);
    }
}
