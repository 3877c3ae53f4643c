//! Gram system `Γ c = μ` restricted to a selected key set.
//!
//! `Γ` holds the pairwise inner products of the basis columns and `μ` the
//! inner products of `f` with each column. Both go through the same weighted
//! dot product so orthogonality checks on either side agree bit for bit.

use std::collections::HashSet;

use rayon::prelude::*;

use crate::basis::{evaluate_phi, IndexKey};
use crate::distribution::EmpiricalDistribution;
use crate::error::{AnovaError, Result};
use crate::linalg::{householder_least_squares, min_norm_solve, norm2, pivoted_cholesky_solve, SquareMatrix};
use crate::scalar::{weighted_dot, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct GramSystem<T> {
    pub keys: Vec<IndexKey>,
    pub gram: SquareMatrix<T>,
    pub mean: Vec<T>,
}

/// Coefficients `c_A^z(f)` aligned with `keys`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector<T> {
    pub keys: Vec<IndexKey>,
    pub values: Vec<T>,
}

impl<T: Scalar> CoefficientVector<T> {
    pub fn get(&self, key: &IndexKey) -> Option<T> {
        self.keys.iter().position(|k| k == key).map(|i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&IndexKey, T)> + '_ {
        self.keys.iter().zip(self.values.iter().copied())
    }
}

/// `⟨φ_a, φ_b⟩`.
pub fn gram_entry<T: Scalar>(dist: &EmpiricalDistribution<T>, key_a: &IndexKey, key_b: &IndexKey) -> Result<T> {
    let a = evaluate_phi(dist, key_a)?;
    let b = evaluate_phi(dist, key_b)?;
    dist.inner_product(&a.values, &b.values)
}

/// `μ = ⟨f, φ_key⟩`.
pub fn mean_coefficient<T: Scalar>(dist: &EmpiricalDistribution<T>, f_values: &[T], key: &IndexKey) -> Result<T> {
    dist.check_len(f_values)?;
    let phi = evaluate_phi(dist, key)?;
    dist.inner_product(f_values, &phi.values)
}

fn check_distinct(keys: &[IndexKey]) -> Result<()> {
    let mut seen = HashSet::with_capacity(keys.len());
    for key in keys {
        if !seen.insert(key) {
            return Err(AnovaError::DuplicateKey(key.to_string()));
        }
    }
    Ok(())
}

/// Builds `Γ` and `μ` from the closed-form columns of `keys`.
pub fn build_system<T: Scalar>(dist: &EmpiricalDistribution<T>, f_values: &[T], keys: &[IndexKey]) -> Result<GramSystem<T>> {
    check_distinct(keys)?;
    let columns = keys
        .par_iter()
        .map(|k| evaluate_phi(dist, k).map(|c| c.values))
        .collect::<Result<Vec<_>>>()?;
    GramSystem::from_columns(dist, f_values, keys.to_vec(), &columns)
}

impl<T: Scalar> GramSystem<T> {
    /// Builds the system from already evaluated columns (one per key).
    pub fn from_columns(
        dist: &EmpiricalDistribution<T>,
        f_values: &[T],
        keys: Vec<IndexKey>,
        columns: &[Vec<T>],
    ) -> Result<Self> {
        check_distinct(&keys)?;
        dist.check_len(f_values)?;
        if columns.len() != keys.len() {
            return Err(AnovaError::LengthMismatch {
                expected: keys.len(),
                found: columns.len(),
            });
        }
        for column in columns {
            dist.check_len(column)?;
        }
        let m = keys.len();
        let w = dist.weights();
        let upper: Vec<Vec<T>> = (0..m)
            .into_par_iter()
            .map(|i| (i..m).map(|j| weighted_dot(w, &columns[i], &columns[j])).collect())
            .collect();
        let mut gram = SquareMatrix::zeros(m);
        for (i, row) in upper.iter().enumerate() {
            for (off, &v) in row.iter().enumerate() {
                gram.set(i, i + off, v);
                gram.set(i + off, i, v);
            }
        }
        let mean = columns.iter().map(|c| weighted_dot(w, f_values, c)).collect();
        Ok(Self { keys, gram, mean })
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// `‖Γ c - μ‖₂`.
    pub fn residual_norm(&self, c: &[T]) -> T {
        let gc = self.gram.mul_vec(c);
        let diff: Vec<T> = gc.iter().zip(&self.mean).map(|(&a, &b)| a - b).collect();
        norm2(&diff)
    }
}

/// Solves `Γ c = μ`.
///
/// Tries Cholesky with diagonal pivoting first; if `Γ` is numerically
/// singular (over-complete keys) falls back to the minimum-norm least-squares
/// solution. Fails when the relative residual still exceeds `tolerance`.
pub fn solve_coefficients<T: Scalar>(system: &GramSystem<T>, tolerance: T) -> Result<CoefficientVector<T>> {
    let mu_norm = norm2(&system.mean);
    if mu_norm == T::zero() {
        return Ok(CoefficientVector {
            keys: system.keys.clone(),
            values: vec![T::zero(); system.len()],
        });
    }
    let refine = |mut c: Vec<T>, solve: &dyn Fn(&[T]) -> Option<Vec<T>>| {
        let gc = system.gram.mul_vec(&c);
        let r: Vec<T> = system.mean.iter().zip(&gc).map(|(&m, &g)| m - g).collect();
        if let Some(dc) = solve(&r) {
            let candidate: Vec<T> = c.iter().zip(&dc).map(|(&a, &b)| a + b).collect();
            if system.residual_norm(&candidate) < system.residual_norm(&c) {
                c = candidate;
            }
        }
        c
    };

    let cholesky = |b: &[T]| pivoted_cholesky_solve(&system.gram, b, tolerance);
    let values = match cholesky(&system.mean) {
        Some(c) => refine(c, &cholesky),
        None => {
            let pinv = |b: &[T]| Some(min_norm_solve(&system.gram, b, tolerance));
            refine(min_norm_solve(&system.gram, &system.mean, tolerance), &pinv)
        }
    };
    let residual = system.residual_norm(&values) / mu_norm;
    if !(residual <= tolerance) {
        return Err(AnovaError::SolveFailed {
            residual: residual.to_f64_lossy(),
            tolerance: tolerance.to_f64_lossy(),
        });
    }
    Ok(CoefficientVector {
        keys: system.keys.clone(),
        values,
    })
}

/// Weighted least-squares coefficients of `f` on `columns`, computed by an
/// orthogonal factorization of the `√w`-scaled design matrix. Algebraically
/// the normal equations `Γ c = μ`; falls back to them (minimum norm) when the
/// columns are numerically dependent.
pub fn least_squares_coefficients<T: Scalar>(
    dist: &EmpiricalDistribution<T>,
    f_values: &[T],
    keys: Vec<IndexKey>,
    columns: &[Vec<T>],
    tolerance: T,
) -> Result<CoefficientVector<T>> {
    check_distinct(&keys)?;
    dist.check_len(f_values)?;
    let sqrt_w: Vec<T> = dist.weights().iter().map(|w| w.sqrt()).collect();
    let scaled: Vec<Vec<T>> = columns
        .par_iter()
        .map(|c| c.iter().zip(&sqrt_w).map(|(&v, &s)| v * s).collect())
        .collect();
    let rhs: Vec<T> = f_values.iter().zip(&sqrt_w).map(|(&v, &s)| v * s).collect();
    match householder_least_squares(&scaled, &rhs, tolerance) {
        Some(values) => Ok(CoefficientVector { keys, values }),
        None => {
            let system = GramSystem::from_columns(dist, f_values, keys, columns)?;
            solve_coefficients(&system, tolerance)
        }
    }
}
