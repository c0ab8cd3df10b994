use serde::{Deserialize, Serialize};

use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

/// Ridge added to the covariance diagonal before the determinant.
pub const COVARIANCE_RIDGE: f64 = 1e-9;
/// A Cholesky pivot below this multiple of the ridge means the unregularized covariance is singular.
const DEGENERACY_FACTOR: f64 = 10.0;

/// Differential entropy of a Gaussian fitted to the rows of a matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianEntropy {
    /// Nats; negative infinity when `degenerate` is set.
    pub nats: f64,
    pub degenerate: bool,
}

/// `½ log((2πe)^m det Σ)` where `Σ` is the unbiased sample covariance of the rows of
/// `samples` (`d × m`, one sample per row), regularized by [`COVARIANCE_RIDGE`].
///
/// Degenerate when `d ≤ m` or the covariance is numerically singular.
pub fn gaussian_entropy<T: Scalar>(samples: &DenseMatrix<T>) -> GaussianEntropy {
    let (d, m) = samples.shape();
    let degenerate = GaussianEntropy {
        nats: f64::NEG_INFINITY,
        degenerate: true,
    };
    if d <= m || m == 0 {
        return degenerate;
    }

    let data = samples.cast::<f64>();
    let mean = data.column_means();
    let mut cov = vec![0.0f64; m * m];
    for r in 0..d {
        let row = data.row(r);
        for i in 0..m {
            let di = row[i] - mean.values()[i];
            for j in 0..=i {
                cov[i * m + j] += di * (row[j] - mean.values()[j]);
            }
        }
    }
    let denom = (d - 1) as f64;
    for i in 0..m {
        for j in 0..=i {
            cov[i * m + j] /= denom;
            cov[j * m + i] = cov[i * m + j];
        }
        cov[i * m + i] += COVARIANCE_RIDGE;
    }

    match cholesky_log_det(&mut cov, m) {
        Some(log_det) => {
            let log_2pi_e = (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
            GaussianEntropy {
                nats: 0.5 * (m as f64 * log_2pi_e + log_det),
                degenerate: false,
            }
        }
        None => degenerate,
    }
}

/// In-place lower Cholesky factorization; returns `log det` or `None` when a pivot collapses.
fn cholesky_log_det(a: &mut [f64], m: usize) -> Option<f64> {
    let mut log_det = 0.0;
    for j in 0..m {
        let mut pivot = a[j * m + j];
        for p in 0..j {
            pivot -= a[j * m + p] * a[j * m + p];
        }
        if pivot <= DEGENERACY_FACTOR * COVARIANCE_RIDGE || !pivot.is_finite() {
            return None;
        }
        let l = pivot.sqrt();
        a[j * m + j] = l;
        log_det += 2.0 * l.ln();
        for i in j + 1..m {
            let mut s = a[i * m + j];
            for p in 0..j {
                s -= a[i * m + p] * a[j * m + p];
            }
            a[i * m + j] = s / l;
        }
    }
    Some(log_det)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HALF_LOG_2PI_E: f64 = 1.418_938_533_204_672_7;

    #[test]
    fn unit_variance_scalar() {
        // [-1, 0, 1] has unbiased variance 1.
        let v = DenseMatrix::from_rows(&[vec![-1.0], vec![0.0], vec![1.0]]).unwrap();
        let h = gaussian_entropy(&v);
        assert!(!h.degenerate);
        assert!((h.nats - HALF_LOG_2PI_E).abs() < 1e-8);
    }

    #[test]
    fn identity_covariance_in_two_dims() {
        // Four points (±a, ±a) with a² = 3/4 give Σ = I under the (d-1) normalization.
        let a = 0.75f64.sqrt();
        let v = DenseMatrix::from_rows(&[
            vec![a, a],
            vec![a, -a],
            vec![-a, a],
            vec![-a, -a],
        ])
        .unwrap();
        let h = gaussian_entropy(&v);
        assert!((h.nats - 2.0 * HALF_LOG_2PI_E).abs() < 1e-8, "{}", h.nats);
    }

    #[test]
    fn identical_rows_are_degenerate() {
        let v = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        let h = gaussian_entropy(&v);
        assert!(h.degenerate);
        assert_eq!(h.nats, f64::NEG_INFINITY);
    }

    #[test]
    fn too_few_rows_are_degenerate() {
        let v = DenseMatrix::<f64>::identity(3);
        assert!(gaussian_entropy(&v).degenerate);
    }
}
