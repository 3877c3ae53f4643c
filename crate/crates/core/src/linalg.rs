//! Small dense kernels: Householder least squares, pivoted Cholesky, and a
//! cyclic Jacobi eigensolver for the minimum-norm fallback.

use rayon::prelude::*;

use crate::scalar::{dot, Scalar};

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> SquareMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn from_rows(n: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), n * n, "matrix data has wrong length");
        Self { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.n).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn max_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

pub(crate) fn norm2<T: Scalar>(v: &[T]) -> T {
    dot(v, v).sqrt()
}

/// Solves `A x = b` for symmetric positive definite `A` by Cholesky with
/// diagonal pivoting. Returns `None` when a pivot falls below
/// `tolerance × max diag(A)`, i.e. `A` is numerically singular.
pub fn pivoted_cholesky_solve<T: Scalar>(a: &SquareMatrix<T>, b: &[T], tolerance: T) -> Option<Vec<T>> {
    let n = a.dim();
    let mut work = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    let scale = (0..n).fold(T::zero(), |m, i| m.max(a.get(i, i)));
    if n > 0 && !(scale > T::zero()) {
        return None;
    }
    for j in 0..n {
        let (p, pivot) = (j..n)
            .map(|i| (i, work.get(i, i)))
            .fold((j, T::neg_infinity()), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(pivot > tolerance * scale) {
            return None;
        }
        if p != j {
            symmetric_swap(&mut work, j, p);
            perm.swap(j, p);
        }
        let d = work.get(j, j).sqrt();
        work.set(j, j, d);
        for i in j + 1..n {
            let l = work.get(i, j) / d;
            work.set(i, j, l);
        }
        for i in j + 1..n {
            let lij = work.get(i, j);
            for k in j + 1..=i {
                let v = work.get(i, k) - lij * work.get(k, j);
                work.set(i, k, v);
            }
        }
    }
    // forward: L u = P b
    let mut u: Vec<T> = perm.iter().map(|&p| b[p]).collect();
    for i in 0..n {
        let mut s = u[i];
        for k in 0..i {
            s = s - work.get(i, k) * u[k];
        }
        u[i] = s / work.get(i, i);
    }
    // backward: L^T v = u
    for i in (0..n).rev() {
        let mut s = u[i];
        for k in i + 1..n {
            s = s - work.get(k, i) * u[k];
        }
        u[i] = s / work.get(i, i);
    }
    let mut x = vec![T::zero(); n];
    for (i, &p) in perm.iter().enumerate() {
        x[p] = u[i];
    }
    Some(x)
}

/// Swaps index `a` and `b` in the lower triangle of a symmetric matrix,
/// keeping the full matrix consistent.
fn symmetric_swap<T: Scalar>(m: &mut SquareMatrix<T>, a: usize, b: usize) {
    let n = m.dim();
    for k in 0..n {
        let (x, y) = (m.get(a, k), m.get(b, k));
        m.set(a, k, y);
        m.set(b, k, x);
    }
    for k in 0..n {
        let (x, y) = (m.get(k, a), m.get(k, b));
        m.set(k, a, y);
        m.set(k, b, x);
    }
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and the eigenvectors as columns of a row-major matrix.
pub fn symmetric_eigen<T: Scalar>(a: &SquareMatrix<T>) -> (Vec<T>, SquareMatrix<T>) {
    let n = a.dim();
    let mut m = a.clone();
    let mut v = SquareMatrix::zeros(n);
    for i in 0..n {
        v.set(i, i, T::one());
    }
    let total = m.frobenius_norm();
    let eps = T::epsilon();
    for _sweep in 0..100 {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m.get(i, j) * m.get(i, j))
            .sum::<T>()
            .sqrt();
        if off <= eps * total || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m.get(p, q);
                if apq == T::zero() {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (T::of(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = (t * t + T::one()).sqrt().recip();
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    ((0..n).map(|i| m.get(i, i)).collect(), v)
}

/// Minimum-norm least-squares solution of `A x = b` for symmetric positive
/// semi-definite `A`; eigenvalues below `tolerance × λ_max` are discarded.
pub fn min_norm_solve<T: Scalar>(a: &SquareMatrix<T>, b: &[T], tolerance: T) -> Vec<T> {
    let n = a.dim();
    let (values, vectors) = symmetric_eigen(a);
    let top = values.iter().fold(T::zero(), |m, &l| m.max(l.abs()));
    let mut x = vec![T::zero(); n];
    for (j, &lambda) in values.iter().enumerate() {
        if !(lambda > tolerance * top) {
            continue;
        }
        let proj = (0..n).fold(T::zero(), |s, i| s + vectors.get(i, j) * b[i]) / lambda;
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = *xi + proj * vectors.get(i, j);
        }
    }
    x
}

/// Least squares `min ‖X c - y‖₂` by Householder QR of the tall matrix whose
/// columns are `columns`. Returns `None` when `X` is numerically rank
/// deficient (`|R_jj| ≤ tolerance × max |R_ii|`).
pub fn householder_least_squares<T: Scalar>(columns: &[Vec<T>], rhs: &[T], tolerance: T) -> Option<Vec<T>> {
    let m = columns.len();
    let n = rhs.len();
    if m == 0 {
        return Some(Vec::new());
    }
    if m > n {
        return None;
    }
    let mut a: Vec<Vec<T>> = columns.to_vec();
    let mut y = rhs.to_vec();
    let mut diag = vec![T::zero(); m];
    for j in 0..m {
        let (head, tail) = a.split_at_mut(j + 1);
        let col = &mut head[j];
        let alpha = norm2(&col[j..]);
        if alpha == T::zero() {
            return None;
        }
        let sign = if col[j] >= T::zero() { T::one() } else { -T::one() };
        let r_jj = -sign * alpha;
        // v = x - r_jj e_1, stored in col[j..]; H = I - 2 v v^T / (v^T v)
        col[j] = col[j] - r_jj;
        let vtv = dot(&col[j..], &col[j..]);
        diag[j] = r_jj;
        let v = &col[j..];
        let apply = |target: &mut [T]| {
            let s = dot(v, &target[j..]) * T::of(2.0) / vtv;
            for (t, &vi) in target[j..].iter_mut().zip(v) {
                *t = *t - s * vi;
            }
        };
        if n * tail.len() > 1 << 16 {
            tail.par_iter_mut().for_each(|c| apply(c));
        } else {
            tail.iter_mut().for_each(|c| apply(c));
        }
        apply(&mut y);
    }
    let top = diag.iter().fold(T::zero(), |mx, &d| mx.max(d.abs()));
    if diag.iter().any(|&d| !(d.abs() > tolerance * top)) {
        return None;
    }
    let mut c = vec![T::zero(); m];
    for i in (0..m).rev() {
        let mut s = y[i];
        for k in i + 1..m {
            s = s - a[k][i] * c[k];
        }
        c[i] = s / diag[i];
    }
    Some(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_spd() {
        let a: SquareMatrix<f64> = SquareMatrix::from_rows(3, vec![4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0]);
        let x_true = [1.0, -2.0, 0.5];
        let b = a.mul_vec(&x_true);
        let x = pivoted_cholesky_solve(&a, &b, 1e-12).unwrap();
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn cholesky_detects_singular() {
        let a = SquareMatrix::from_rows(2, vec![1.0, 1.0, 1.0, 1.0]);
        assert!(pivoted_cholesky_solve(&a, &[1.0, 1.0], 1e-9).is_none());
    }

    #[test]
    fn min_norm_on_singular_system() {
        let a = SquareMatrix::from_rows(2, vec![1.0, 1.0, 1.0, 1.0]);
        let x: Vec<f64> = min_norm_solve(&a, &[2.0, 2.0], 1e-9);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigen_reconstructs() {
        let a = SquareMatrix::from_rows(3, vec![2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let (vals, vecs) = symmetric_eigen(&a);
        for i in 0..3 {
            for j in 0..3 {
                let s: f64 = (0..3).map(|k| vecs.get(i, k) * vals[k] * vecs.get(j, k)).sum();
                assert!((s - a.get(i, j)).abs() < 1e-12);
            }
        }
        let mut sorted = vals.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((sorted[0] - (2.0 - 2f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn householder_matches_exact_fit() {
        let cols: Vec<Vec<f64>> = vec![vec![1.0, 1.0, 1.0, 1.0], vec![0.0, 1.0, 2.0, 3.0]];
        let y = [1.0, 3.0, 5.0, 7.0];
        let c = householder_least_squares(&cols, &y, 1e-12).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-12 && (c[1] - 2.0).abs() < 1e-12);
        let dependent = vec![vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0]];
        assert!(householder_least_squares(&dependent, &[1.0, 1.0, 1.0], 1e-9).is_none());
    }
}
