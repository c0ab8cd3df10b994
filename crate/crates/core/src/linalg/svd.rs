//! Truncated singular value decomposition.
//!
//! A randomized range finder (Gaussian test matrix, oversampling, power iterations with
//! re-orthonormalization) captures the dominant column space of `X`. The small projected
//! matrix `B = Qᵀ X` is then decomposed exactly with one-sided Jacobi rotations, which keep
//! the right singular vectors orthonormal to working precision.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{LedaError, Result};
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

/// Extra sampled directions beyond the requested rank.
pub const OVERSAMPLING: usize = 8;
/// Minimum number of power iterations.
pub const POWER_ITERATIONS: usize = 4;
/// Power iterations stop early once the projected singular values settle to this relative change.
const POWER_TOLERANCE: f64 = 1e-13;
const MAX_POWER_ITERATIONS: usize = 64;
const MAX_JACOBI_SWEEPS: usize = 80;

#[derive(Clone, Debug)]
pub struct SvdResult<T> {
    /// Left singular vectors, `n × k`.
    pub u: DenseMatrix<T>,
    /// Nonincreasing, nonnegative, length `k`.
    pub singular_values: Vec<T>,
    /// Right singular vectors, `d × k`, orthonormal columns.
    pub v: DenseMatrix<T>,
    /// Set when `X` has numerical rank below `k`; the missing columns were completed.
    pub rank_deficient: bool,
}

impl<T: Scalar> SvdResult<T> {
    /// `U Σ Vᵀ`.
    pub fn reconstruct(&self) -> DenseMatrix<T> {
        let mut scaled = self.u.clone();
        for r in 0..scaled.rows() {
            for (v, &s) in scaled.row_mut(r).iter_mut().zip(&self.singular_values) {
                *v = *v * s;
            }
        }
        scaled.matmul_t_unchecked(&self.v)
    }
}

/// Top-`k` singular triplets of `x`, deterministic for a given `seed`.
///
/// Each right singular vector is sign-normalized so that its entry of largest magnitude is
/// nonnegative; the matching left vector flips with it.
pub fn truncated_svd<T: Scalar>(x: &DenseMatrix<T>, k: usize, seed: u64) -> Result<SvdResult<T>> {
    let (n, d) = x.shape();
    if k == 0 || k > n.min(d) {
        return Err(LedaError::InvalidArgument(format!(
            "svd rank {k} outside [1, {}] for a {n}x{d} matrix",
            n.min(d)
        )));
    }
    if !x.is_finite() {
        return Err(LedaError::NonFinite("svd input".into()));
    }

    let sample = (k + OVERSAMPLING).min(n.min(d));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = DenseMatrix::<T>::random_normal(d, sample, &mut rng);
    let mut q = orthonormal_columns(&x.matmul_unchecked(&omega));

    // `sample == min(n, d)` already spans the full range after one pass.
    let mut previous: Option<Vec<T>> = None;
    for iteration in 0..MAX_POWER_ITERATIONS {
        if q.cols() == 0 {
            break;
        }
        let z = orthonormal_columns(&x.t_matmul_unchecked(&q));
        q = orthonormal_columns(&x.matmul_unchecked(&z));
        if iteration + 1 >= POWER_ITERATIONS {
            let projected = q.t_matmul_unchecked(x);
            let current = column_norms_of_jacobi(&projected.transpose(), k);
            if let Some(prev) = &previous {
                if converged(prev, &current) {
                    break;
                }
            }
            previous = Some(current);
        }
    }

    // B = Qᵀ X is r × d; decompose M = Bᵀ (d × r) with one-sided Jacobi: M J = W Σ.
    let b = q.t_matmul_unchecked(x);
    let (w, sigma, j) = one_sided_jacobi(&b.transpose());

    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].partial_cmp(&sigma[a]).unwrap().then(a.cmp(&b)));

    let sigma_max = order.first().map_or(T::zero(), |&i| sigma[i]);
    let cutoff = sigma_max * T::epsilon() * T::of((n.max(d) * 16) as f64);

    let mut v_cols: Vec<Vec<T>> = Vec::with_capacity(k);
    let mut u_cols: Vec<Vec<T>> = Vec::with_capacity(k);
    let mut values: Vec<T> = Vec::with_capacity(k);
    let mut rank_deficient = false;
    for &idx in order.iter().take(k) {
        let s = sigma[idx];
        if s <= cutoff || s == T::zero() {
            rank_deficient = true;
            break;
        }
        let v_col: Vec<T> = (0..d).map(|r| w[(r, idx)] / s).collect();
        // Left vectors: X v = Q B v = Q (J e_idx) σ.
        let u_col: Vec<T> = (0..n)
            .map(|r| (0..q.cols()).map(|c| q[(r, c)] * j[(c, idx)]).sum())
            .collect();
        v_cols.push(v_col);
        u_cols.push(u_col);
        values.push(s);
    }
    if values.len() < k {
        rank_deficient = true;
    }
    while values.len() < k {
        values.push(T::zero());
    }

    let v_cols = complete_orthonormal(v_cols, d, k);
    let u_cols = complete_orthonormal(u_cols, n, k);

    let mut v = DenseMatrix::zeros(d, k);
    let mut u = DenseMatrix::zeros(n, k);
    for c in 0..k {
        let sign = sign_of_largest(&v_cols[c]);
        v.set_column(c, &v_cols[c].iter().map(|&e| e * sign).collect::<Vec<_>>());
        u.set_column(c, &u_cols[c].iter().map(|&e| e * sign).collect::<Vec<_>>());
    }

    Ok(SvdResult {
        u,
        singular_values: values,
        v,
        rank_deficient,
    })
}

fn converged<T: Scalar>(prev: &[T], current: &[T]) -> bool {
    let scale = current.first().copied().unwrap_or(T::zero()).max(T::min_positive_value());
    prev.len() == current.len()
        && prev
            .iter()
            .zip(current)
            .all(|(&a, &b)| (a - b).abs() <= T::of(POWER_TOLERANCE) * scale)
}

/// Leading `k` singular values of a tall matrix, used to monitor power-iteration progress.
fn column_norms_of_jacobi<T: Scalar>(m: &DenseMatrix<T>, k: usize) -> Vec<T> {
    let (_, mut sigma, _) = one_sided_jacobi(m);
    sigma.sort_by(|a, b| b.partial_cmp(a).unwrap());
    sigma.truncate(k);
    sigma
}

fn sign_of_largest<T: Scalar>(col: &[T]) -> T {
    let mut best = T::zero();
    for &e in col {
        if e.abs() > best.abs() {
            best = e;
        }
    }
    if best < T::zero() {
        -T::one()
    } else {
        T::one()
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Removes from `v` its projection on each of `basis`, twice for stability.
fn project_out<T: Scalar>(v: &mut [T], basis: &[Vec<T>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(v, b);
            for (x, &y) in v.iter_mut().zip(b) {
                *x = *x - c * y;
            }
        }
    }
}

/// Modified Gram-Schmidt with re-orthogonalization. Columns that are numerically dependent on
/// earlier ones are dropped, so the result may have fewer columns than the input.
pub(crate) fn orthonormal_columns<T: Scalar>(y: &DenseMatrix<T>) -> DenseMatrix<T> {
    let (rows, cols) = y.shape();
    let mut basis: Vec<Vec<T>> = Vec::with_capacity(cols);
    for c in 0..cols {
        let mut col = y.column(c);
        let original = norm(&col);
        if original == T::zero() {
            continue;
        }
        project_out(&mut col, &basis);
        let remaining = norm(&col);
        if remaining <= original * T::epsilon() * T::of(1e3) {
            continue;
        }
        for e in col.iter_mut() {
            *e = *e / remaining;
        }
        basis.push(col);
    }
    let mut q = DenseMatrix::zeros(rows, basis.len());
    for (c, col) in basis.iter().enumerate() {
        q.set_column(c, col);
    }
    q
}

/// Re-orthonormalizes `cols` in order and extends them to `k` orthonormal vectors of length
/// `dim` using standard basis directions.
fn complete_orthonormal<T: Scalar>(cols: Vec<Vec<T>>, dim: usize, k: usize) -> Vec<Vec<T>> {
    let mut basis: Vec<Vec<T>> = Vec::with_capacity(k);
    for mut col in cols {
        project_out(&mut col, &basis);
        let nrm = norm(&col);
        for e in col.iter_mut() {
            *e = *e / nrm;
        }
        basis.push(col);
    }
    let mut axis = 0;
    while basis.len() < k && axis < dim {
        let mut col = vec![T::zero(); dim];
        col[axis] = T::one();
        axis += 1;
        project_out(&mut col, &basis);
        let nrm = norm(&col);
        if nrm > T::of(1e-6) {
            for e in col.iter_mut() {
                *e = *e / nrm;
            }
            basis.push(col);
        }
    }
    basis
}

/// One-sided (Hestenes) Jacobi on a tall matrix `m` (`rows × c`).
///
/// Returns `(W, σ, J)` with `m · J = W`, the columns of `W` mutually orthogonal, `σ_i = ‖W_i‖`
/// and `J` orthogonal (`c × c`).
pub(crate) fn one_sided_jacobi<T: Scalar>(
    m: &DenseMatrix<T>,
) -> (DenseMatrix<T>, Vec<T>, DenseMatrix<T>) {
    let (rows, c) = m.shape();
    let mut cols: Vec<Vec<T>> = (0..c).map(|i| m.column(i)).collect();
    let mut rot: Vec<Vec<T>> = (0..c)
        .map(|i| {
            let mut e = vec![T::zero(); c];
            e[i] = T::one();
            e
        })
        .collect();
    let tol = T::epsilon();

    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..c {
            for q in p + 1..c {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if alpha == T::zero() || beta == T::zero() {
                    continue;
                }
                if gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::of(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let cs = T::one() / (T::one() + t * t).sqrt();
                let sn = cs * t;
                rotate(&mut cols, p, q, cs, sn);
                rotate(&mut rot, p, q, cs, sn);
            }
        }
        if !rotated {
            break;
        }
    }

    let sigma: Vec<T> = cols.iter().map(|col| norm(col)).collect();
    let mut w = DenseMatrix::zeros(rows, c);
    let mut j = DenseMatrix::zeros(c, c);
    for i in 0..c {
        w.set_column(i, &cols[i]);
        j.set_column(i, &rot[i]);
    }
    (w, sigma, j)
}

fn rotate<T: Scalar>(cols: &mut [Vec<T>], p: usize, q: usize, cs: T, sn: T) {
    let (left, right) = cols.split_at_mut(q);
    let (a, b) = (&mut left[p], &mut right[0]);
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let (xp, yq) = (*x, *y);
        *x = cs * xp - sn * yq;
        *y = sn * xp + cs * yq;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orthonormality_error(v: &DenseMatrix<f64>) -> f64 {
        v.t_matmul_unchecked(v)
            .max_abs_diff(&DenseMatrix::identity(v.cols()))
            .unwrap()
    }

    #[test]
    fn diagonal_rank_one() {
        let x = DenseMatrix::<f64>::from_rows(&[vec![3.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let svd = truncated_svd(&x, 1, 7).unwrap();
        assert!((svd.singular_values[0] - 3.0).abs() < 1e-12);
        assert!((svd.v[(0, 0)].abs() - 1.0).abs() < 1e-12);
        assert!(svd.v[(1, 0)].abs() < 1e-12);
        assert!(svd.v[(0, 0)] > 0.0);
    }

    #[test]
    fn identity_has_unit_spectrum() {
        let svd = truncated_svd(&DenseMatrix::<f64>::identity(4), 4, 1).unwrap();
        for s in &svd.singular_values {
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert!(orthonormality_error(&svd.v) < 1e-12);
    }

    #[test]
    fn rank_deficiency_is_completed() {
        let x = DenseMatrix::<f64>::from_rows(&[vec![1.0, 2.0, 2.0], vec![1.0, 2.0, 2.0]]).unwrap();
        let svd = truncated_svd(&x, 2, 3).unwrap();
        assert!(svd.rank_deficient);
        assert!(orthonormality_error(&svd.v) < 1e-12);
        let first: Vec<f64> = svd.v.column(0);
        assert!((first[0] - 1.0 / 3.0).abs() < 1e-12);
        assert!((first[1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn bad_rank_and_nan_rejected() {
        let x = DenseMatrix::<f64>::identity(3);
        assert!(truncated_svd(&x, 0, 0).is_err());
        assert!(truncated_svd(&x, 4, 0).is_err());
        let mut y = x.clone();
        y.values_mut()[0] = f64::INFINITY;
        assert!(truncated_svd(&y, 1, 0).is_err());
    }

    #[test]
    fn same_seed_same_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = DenseMatrix::<f64>::random_normal(15, 9, &mut rng);
        let a = truncated_svd(&x, 3, 11).unwrap();
        let b = truncated_svd(&x, 3, 11).unwrap();
        assert_eq!(a.v, b.v);
        assert_eq!(a.singular_values, b.singular_values);
    }

    #[test]
    fn works_in_single_precision() {
        let x = DenseMatrix::<f32>::from_rows(&[vec![3.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let svd = truncated_svd(&x, 2, 0).unwrap();
        assert!((svd.singular_values[0] - 3.0).abs() < 1e-5);
        assert!((svd.singular_values[1] - 2.0).abs() < 1e-5);
    }
}
