//! Cyclic Jacobi eigenvalue iteration for dense real symmetric matrices.

use crate::scalar::Scalar;

const MAX_SWEEPS: usize = 100;

/// Eigenvalues of the symmetric `n x n` matrix stored row-major in `matrix`.
/// Only the upper triangle is read. Order of the result is unspecified.
pub fn symmetric_eigenvalues<S: Scalar>(matrix: &[S], n: usize) -> Vec<S> {
    assert_eq!(matrix.len(), n * n, "matrix must be n x n");
    let mut a = matrix.to_vec();
    for i in 0..n {
        for j in 0..i {
            a[i * n + j] = a[j * n + i];
        }
    }

    let scale: S = a.iter().map(|v| *v * *v).sum::<S>().sqrt();
    let threshold = S::epsilon() * scale.max(S::min_positive_value());

    for _ in 0..MAX_SWEEPS {
        let off: S = (0..n)
            .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
            .map(|(p, q)| a[p * n + q] * a[p * n + q])
            .sum::<S>()
            .sqrt();
        if off <= threshold {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == S::zero() {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                // tan of the rotation angle, smaller root for stability
                let theta = (aqq - app) / (S::of(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + S::one()).sqrt());
                let c = S::one() / (t * t + S::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).collect()
}
