//! Dense symmetric eigensolver.
//!
//! Cyclic Jacobi rotations on a row-major symmetric matrix. The problem
//! sizes here are dynamical matrices of modest chains (N ≤ 256), where
//! Jacobi is simple, unconditionally stable, and delivers eigenvalues to
//! machine precision with orthonormal eigenvectors.

use crate::{Error, Result};

/// Eigendecomposition of a real symmetric matrix, eigenvalues ascending.
/// `vectors[j]` is the eigenvector for `values[j]`.
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

/// Diagonalize the symmetric matrix `a` (row-major, n×n). Symmetry is the
/// caller's contract; the strictly lower triangle is ignored.
pub fn eigh(a: &[f64], n: usize) -> Result<Eigen> {
    if a.len() != n * n {
        return Err(Error::Numeric(format!(
            "eigensolver given {} entries for an {n}x{n} matrix",
            a.len()
        )));
    }
    if n == 0 {
        return Ok(Eigen { values: vec![], vectors: vec![] });
    }

    let mut m = a.to_vec();
    // Mirror the upper triangle so sweeps can read either side.
    for i in 0..n {
        for j in (i + 1)..n {
            m[j * n + i] = m[i * n + j];
        }
    }
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let fro2: f64 = m.iter().map(|x| x * x).sum();
    let tol2 = 1e-26 * fro2.max(f64::MIN_POSITIVE);
    const MAX_SWEEPS: usize = 64;

    let off2 = |m: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += 2.0 * m[i * n + j] * m[i * n + j];
            }
        }
        s
    };

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        if off2(&m) <= tol2 {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                // Stable rotation angle (Golub & Van Loan, symmetric Schur).
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for k in 0..n {
                    let mkp = m[k * n + p];
                    let mkq = m[k * n + q];
                    m[k * n + p] = c * mkp - s * mkq;
                    m[k * n + q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[p * n + k];
                    let mqk = m[q * n + k];
                    m[p * n + k] = c * mpk - s * mqk;
                    m[q * n + k] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged && off2(&m) > tol2 {
        return Err(Error::Numeric(format!(
            "Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps \
             (off-diagonal norm {:.3e}, target {:.3e})",
            off2(&m).sqrt(),
            tol2.sqrt()
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[i * n + i].total_cmp(&m[j * n + j]));

    let values = order.iter().map(|&j| m[j * n + j]).collect();
    let vectors = order
        .iter()
        .map(|&j| (0..n).map(|k| v[k * n + j]).collect())
        .collect();
    Ok(Eigen { values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_exact() {
        // [[2, 1], [1, 2]] has eigenvalues 1 and 3.
        let e = eigh(&[2.0, 1.0, 1.0, 2.0], 2).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-14);
        assert!((e.values[1] - 3.0).abs() < 1e-14);
        // Eigenvector for 1 is (1, -1)/sqrt(2) up to sign.
        let v0 = &e.vectors[0];
        assert!((v0[0] + v0[1]).abs() < 1e-12, "{v0:?}");
    }

    #[test]
    fn diagonal_matrix_sorted() {
        let e = eigh(&[3.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 2.0], 3).unwrap();
        assert_eq!(e.values.len(), 3);
        assert!((e.values[0] + 1.0).abs() < 1e-14);
        assert!((e.values[1] - 2.0).abs() < 1e-14);
        assert!((e.values[2] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn residual_and_orthonormality_n40() {
        // Deterministic pseudo-random symmetric matrix.
        let n = 40;
        let mut rng = crate::rng::Xoshiro256StarStar::from_seed(9);
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let x = 2.0 * rng.next_f64() - 1.0;
                a[i * n + j] = x;
                a[j * n + i] = x;
            }
        }
        let e = eigh(&a, n).unwrap();
        // Ascending order.
        for w in e.values.windows(2) {
            assert!(w[0] <= w[1]);
        }
        // ||A v - lambda v|| small and vectors orthonormal.
        for (j, vec_j) in e.vectors.iter().enumerate() {
            let mut res = 0.0_f64;
            for i in 0..n {
                let av: f64 = (0..n).map(|k| a[i * n + k] * vec_j[k]).sum();
                res = res.max((av - e.values[j] * vec_j[i]).abs());
            }
            assert!(res < 1e-10, "residual {res} for mode {j}");
            for (l, vec_l) in e.vectors.iter().enumerate() {
                let dot: f64 = vec_j.iter().zip(vec_l).map(|(x, y)| x * y).sum();
                let want = if l == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10, "dot({j},{l}) = {dot}");
            }
        }
    }

    #[test]
    fn size_mismatch_rejected() {
        assert!(eigh(&[1.0, 2.0, 3.0], 2).is_err());
    }
}
