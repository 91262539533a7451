//! Dense symmetric linear algebra: Cholesky factorization, triangular
//! solves and a Jacobi eigensolver for PSD repair.
//!
//! The factorization is unblocked and runs single threaded; at the sizes
//! used here (n <= 1000 training points) this stays well below a second
//! and keeps results bit-reproducible regardless of thread count.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    /// The matrix is not positive definite; carries the failing pivot
    /// value, which lower-bounds the smallest eigenvalue.
    #[error("matrix not positive definite (failing pivot {pivot:.3e} at index {index})")]
    NotPositiveDefinite { pivot: f64, index: usize },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky(a: &ArrayView2<f64>) -> Result<Array2<f64>, LinalgError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(LinalgError::NotSquare {
            rows: n,
            cols: a.ncols(),
        });
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(LinalgError::NotPositiveDefinite { pivot: d, index: j });
        }
        let dj = d.sqrt();
        l[[j, j]] = dj;
        for i in (j + 1)..n {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = s / dj;
        }
    }
    Ok(l)
}

/// Solve `L x = b` for lower-triangular `L`.
pub fn solve_lower(l: &ArrayView2<f64>, b: &ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut x = b.to_owned();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[[i, k]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// Solve `L^T x = b` for lower-triangular `L`.
pub fn solve_lower_transpose(l: &ArrayView2<f64>, b: &ArrayView1<f64>) -> Array1<f64> {
    let n = l.nrows();
    let mut x = b.to_owned();
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * x[k];
        }
        x[i] = s / l[[i, i]];
    }
    x
}

/// Solve `A x = b` given the Cholesky factor `L` of `A = L L^T`.
pub fn cholesky_solve(l: &ArrayView2<f64>, b: &ArrayView1<f64>) -> Array1<f64> {
    let y = solve_lower(l, b);
    solve_lower_transpose(l, &y.view())
}

/// log det A from the Cholesky factor of A.
pub fn log_det_from_cholesky(l: &ArrayView2<f64>) -> f64 {
    2.0 * l.diag().iter().map(|d| d.ln()).sum::<f64>()
}

/// Eigenvalues and eigenvectors of a symmetric matrix via cyclic Jacobi
/// rotations. Returns `(eigenvalues, columns-of-eigenvectors)` with
/// eigenvalues ascending. Intended for the opt-in PSD repair path and
/// small-n diagnostics, not for large matrices.
pub fn symmetric_eigen(a: &ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>), LinalgError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(LinalgError::NotSquare {
            rows: n,
            cols: a.ncols(),
        });
    }
    let mut m = a.to_owned();
    let mut v = Array2::<f64>::eye(n);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[[i, j]] * m[[i, j]];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + m.diag().iter().map(|d| d.abs()).fold(0.0, f64::max)) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[i, i]].partial_cmp(&m[[j, j]]).unwrap());
    let eigvals = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let mut eigvecs = Array2::<f64>::zeros((n, n));
    for (new, &old) in order.iter().enumerate() {
        eigvecs.column_mut(new).assign(&v.column(old));
    }
    Ok((eigvals, eigvecs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn cholesky_reconstructs() {
        let a = array![[4.0, 2.0, 0.6], [2.0, 5.0, 1.0], [0.6, 1.0, 3.0]];
        let l = cholesky(&a.view()).unwrap();
        let r = l.dot(&l.t());
        for ((i, j), v) in a.indexed_iter() {
            assert_abs_diff_eq!(r[[i, j]], *v, epsilon = 1e-12);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        match cholesky(&a.view()) {
            Err(LinalgError::NotPositiveDefinite { pivot, index }) => {
                assert!(pivot <= 0.0);
                assert_eq!(index, 1);
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn solve_round_trip() {
        let a = array![[4.0, 2.0, 0.6], [2.0, 5.0, 1.0], [0.6, 1.0, 3.0]];
        let l = cholesky(&a.view()).unwrap();
        let b = array![1.0, -2.0, 0.5];
        let x = cholesky_solve(&l.view(), &b.view());
        let back = a.dot(&x);
        for i in 0..3 {
            assert_abs_diff_eq!(back[i], b[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn log_det_matches_direct() {
        let a = array![[2.0, 0.3], [0.3, 1.5]];
        let l = cholesky(&a.view()).unwrap();
        let det: f64 = 2.0 * 1.5 - 0.09;
        assert_abs_diff_eq!(log_det_from_cholesky(&l.view()), det.ln(), epsilon = 1e-12);
    }

    #[test]
    fn jacobi_eigen_diagonalizes() {
        let a = array![[3.0, 1.0, 0.2], [1.0, 2.0, -0.5], [0.2, -0.5, 1.0]];
        let (vals, vecs) = symmetric_eigen(&a.view()).unwrap();
        // A v_i = lambda_i v_i
        for i in 0..3 {
            let v = vecs.column(i);
            let av = a.dot(&v);
            for k in 0..3 {
                assert_abs_diff_eq!(av[k], vals[i] * v[k], epsilon = 1e-10);
            }
        }
        // trace preserved
        assert_abs_diff_eq!(vals.sum(), 6.0, epsilon = 1e-10);
    }
}
