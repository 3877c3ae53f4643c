//! Seeded generators for test and validation instances.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::distribution::{Category, EmpiricalDistribution, HyperGrid};
use crate::error::Result;
use crate::scalar::Scalar;

/// Every cell of the grid, in lexicographic order.
pub fn grid_rows(cardinalities: &[u32]) -> Vec<Vec<Category>> {
    let mut rows: Vec<Vec<Category>> = vec![Vec::new()];
    for &n in cardinalities {
        rows = rows
            .into_iter()
            .flat_map(|prefix| {
                (0..n).map(move |x| {
                    let mut row = prefix.clone();
                    row.push(x);
                    row
                })
            })
            .collect();
    }
    rows
}

pub fn random_cardinalities<R: Rng>(rng: &mut R, dims: usize, max_categories: u32) -> Vec<u32> {
    (0..dims).map(|_| rng.gen_range(2..=max_categories.max(2))).collect()
}

/// Uniform distribution on the full grid.
pub fn uniform_grid<T: Scalar>(cardinalities: &[u32]) -> Result<EmpiricalDistribution<T>> {
    let grid = HyperGrid::new(cardinalities.to_vec())?;
    EmpiricalDistribution::from_dataset(&grid_rows(cardinalities), Some(grid))
}

/// Uniform distribution on `{0,1}^d`.
pub fn boolean_cube<T: Scalar>(dims: usize) -> Result<EmpiricalDistribution<T>> {
    uniform_grid(&vec![2; dims])
}

fn random_simplex<T: Scalar, R: Rng>(rng: &mut R, n: usize) -> Vec<T> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| T::of(v / total)).collect()
}

/// Full-grid product distribution with random positive marginals.
pub fn random_product<T: Scalar, R: Rng>(rng: &mut R, cardinalities: &[u32]) -> Result<EmpiricalDistribution<T>> {
    let marginals: Vec<Vec<f64>> = cardinalities
        .iter()
        .map(|&n| random_simplex::<f64, _>(rng, n as usize))
        .collect();
    let rows = grid_rows(cardinalities);
    let mut weights: Vec<f64> = rows
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(i, &x)| marginals[i][x as usize])
                .product()
        })
        .collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let weights: Vec<T> = weights.into_iter().map(T::of).collect();
    EmpiricalDistribution::from_support(HyperGrid::new(cardinalities.to_vec())?, &rows, &weights)
}

/// Random subset of the grid covering at least `coverage` of its cells, with
/// random positive weights. Every category of every feature is observed at
/// least once so the grid is not trivially smaller than declared.
pub fn random_sparse<T: Scalar, R: Rng>(
    rng: &mut R,
    cardinalities: &[u32],
    coverage: f64,
) -> Result<EmpiricalDistribution<T>> {
    let mut rows = grid_rows(cardinalities);
    rows.shuffle(rng);
    let target = ((rows.len() as f64 * coverage).ceil() as usize).clamp(1, rows.len());
    let mut chosen: Vec<Vec<Category>> = Vec::with_capacity(target);
    let mut rest = Vec::new();
    let mut seen: Vec<Vec<bool>> = cardinalities.iter().map(|&n| vec![false; n as usize]).collect();
    for row in rows {
        let novel = row.iter().enumerate().any(|(i, &x)| !seen[i][x as usize]);
        if novel {
            for (i, &x) in row.iter().enumerate() {
                seen[i][x as usize] = true;
            }
            chosen.push(row);
        } else {
            rest.push(row);
        }
    }
    for row in rest {
        if chosen.len() >= target {
            break;
        }
        chosen.push(row);
    }
    let weights: Vec<T> = random_simplex(rng, chosen.len());
    let total: T = weights.iter().copied().sum();
    let weights: Vec<T> = weights.into_iter().map(|w| w / total).collect();
    EmpiricalDistribution::from_support(HyperGrid::new(cardinalities.to_vec())?, &chosen, &weights)
}

/// Full grid with random, generally dependent, positive weights.
pub fn random_full_dependent<T: Scalar, R: Rng>(rng: &mut R, cardinalities: &[u32]) -> Result<EmpiricalDistribution<T>> {
    random_sparse(rng, cardinalities, 1.0)
}

/// Function values uniform in `[-1, 1)`.
pub fn random_function<T: Scalar, R: Rng>(rng: &mut R, len: usize) -> Vec<T> {
    (0..len).map(|_| T::of(rng.gen_range(-1.0..1.0))).collect()
}

/// Five-feature instance: `X1, X2, X4` i.i.d. uniform on `{0,1,2}`,
/// `X3 = X2`, `X5 = 1`, and `f = sign(X1 - X2 + X3/2)`.
pub fn analytical_case<T: Scalar>() -> Result<(EmpiricalDistribution<T>, Vec<T>)> {
    let mut rows = Vec::with_capacity(27);
    for x1 in 0..3u32 {
        for x2 in 0..3u32 {
            for x4 in 0..3u32 {
                rows.push(vec![x1, x2, x2, x4, 1]);
            }
        }
    }
    let dist = EmpiricalDistribution::from_dataset(&rows, None)?;
    let f = dist.rows().map(analytical_target).collect();
    Ok((dist, f))
}

/// `sign(x1 - x2 + 0.5 x3)` with `sign(0) = 0`.
pub fn analytical_target<T: Scalar>(row: &[Category]) -> T {
    let v = row[0] as f64 - row[1] as f64 + 0.5 * row[2] as f64;
    T::of(if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    })
}

/// Wide categorical dataset of `n` rows over `dims` features with 2 to 4
/// categories each. About 80% of the rows are distinct; the rest repeat
/// earlier rows. The target is additive in the features plus a weak pairwise
/// term, and is a function of the row.
pub fn wide_dataset<R: Rng>(rng: &mut R, n: usize, dims: usize) -> (Vec<Vec<Category>>, Vec<u32>, Vec<f64>) {
    let cards: Vec<u32> = (0..dims).map(|i| 2 + (i % 3) as u32).collect();
    let effects: Vec<Vec<f64>> = cards
        .iter()
        .map(|&n| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let fresh = (n * 4).div_ceil(5);
    let mut rows: Vec<Vec<Category>> = Vec::with_capacity(n);
    for k in 0..n {
        let row = if k < fresh || rows.is_empty() {
            cards.iter().map(|&c| rng.gen_range(0..c)).collect()
        } else {
            rows[rng.gen_range(0..fresh.min(rows.len()))].clone()
        };
        rows.push(row);
    }
    rows.shuffle(rng);
    let target = rows
        .iter()
        .map(|row| {
            let additive: f64 = row
                .iter()
                .enumerate()
                .map(|(i, &x)| effects[i][x as usize])
                .sum();
            let pair = if row.len() >= 2 { 0.1 * (row[0] as f64) * (row[1] as f64) } else { 0.0 };
            additive + pair
        })
        .collect();
    (rows, cards, target)
}
