//! Linear solvers.
//!
//! All graph systems here are symmetric positive definite and diagonally
//! dominant, so a Jacobi-preconditioned conjugate gradient is sufficient at
//! desk scale. The small dense systems of the centroid update are solved by LU
//! with partial pivoting.

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

pub const DEFAULT_TOL: f64 = 1e-10;

/// Solves `A x = b` for symmetric positive-definite `A` to `‖Ax − b‖ ≤ tol·‖b‖`.
///
/// Iteration cap is `10·n`. The result is deterministic for fixed inputs.
pub fn solve_spd(a: &CsrMatrix, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    let n = a.dim();
    if b.len() != n {
        return Err(Error::input(format!("right-hand side has length {}, matrix is {n}×{n}", b.len())));
    }
    if !(tol > 0.0) {
        return Err(Error::input("solver tolerance must be positive"));
    }
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let diag = a.diagonal();
    if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::input(format!("matrix has non-positive diagonal entry at {i}; not SPD")));
    }
    let inv_diag: Vec<f64> = diag.iter().map(|d| 1.0 / d).collect();

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let cap = 10 * n.max(1);
    let target = tol * bnorm;

    for _ in 0..cap {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Solver {
                iterations: 0,
                residual: norm(&r) / bnorm,
            });
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        if norm(&r) <= target {
            // confirm against the true residual; the recurrence drifts
            let true_r = residual(a, &x, b);
            if norm(&true_r) <= target {
                return Ok(x);
            }
            r = true_r;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = norm(&residual(a, &x, b)) / bnorm;
    if res <= tol {
        return Ok(x);
    }
    Err(Error::Solver {
        iterations: cap,
        residual: res,
    })
}

/// `b − A x`.
pub fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let ax = a.mul_vec(x);
    b.iter().zip(ax).map(|(b, ax)| b - ax).collect()
}

/// Solves a dense square system `A X = B` with several right-hand sides by LU
/// with partial pivoting. `a` is row-major `n × n`, `b` is `n × m`.
pub fn solve_dense(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    if a.iter().any(|r| r.len() != n) || b.len() != n {
        return Err(Error::input("dense system dimensions do not match"));
    }
    let m = b.first().map(Vec::len).unwrap_or(0);
    let mut lu: Vec<Vec<f64>> = a.to_vec();
    let mut rhs: Vec<Vec<f64>> = b.to_vec();
    let scale = lu
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |acc, v| acc.max(v.abs()));
    let singular_tol = scale * n as f64 * f64::EPSILON;

    for col in 0..n {
        let (piv, pval) = (col..n)
            .map(|r| (r, lu[r][col].abs()))
            .fold((col, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(pval > singular_tol) {
            return Err(Error::degenerate(format!("dense system is singular (pivot {pval:.3e} in column {col})")));
        }
        lu.swap(col, piv);
        rhs.swap(col, piv);
        for r in (col + 1)..n {
            let factor = lu[r][col] / lu[col][col];
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                lu[r][c] -= factor * lu[col][c];
            }
            for c in 0..m {
                rhs[r][c] -= factor * rhs[col][c];
            }
        }
    }
    let mut x = vec![vec![0.0; m]; n];
    for r in (0..n).rev() {
        for c in 0..m {
            let mut acc = rhs[r][c];
            for k in (r + 1)..n {
                acc -= lu[r][k] * x[k][c];
            }
            x[r][c] = acc / lu[r][r];
        }
    }
    Ok(x)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_returns_rhs() {
        let b = vec![1.5, -2.0, 0.25];
        let x = solve_spd(&CsrMatrix::identity(3), &b, 1e-12).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn diagonal_system() {
        let a = CsrMatrix::from_triplets(3, vec![(0, 0, 2.0), (1, 1, 4.0), (2, 2, 0.5)]);
        let x = solve_spd(&a, &[1.0, 2.0, 3.0], 1e-12).unwrap();
        assert_eq!(x, vec![0.5, 0.5, 6.0]);
    }

    #[test]
    fn zero_rhs_and_bad_input() {
        let a = CsrMatrix::identity(2);
        assert_eq!(solve_spd(&a, &[0.0, 0.0], 1e-10).unwrap(), vec![0.0, 0.0]);
        assert!(solve_spd(&a, &[1.0], 1e-10).is_err());
        assert!(solve_spd(&a, &[1.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn indefinite_matrix_reports_solver_error() {
        let a = CsrMatrix::from_dense(&[vec![1.0, 3.0], vec![3.0, 1.0]]);
        let err = solve_spd(&a, &[1.0, -1.0], 1e-12).unwrap_err();
        assert!(matches!(err, Error::Solver { .. }));
    }

    #[test]
    fn dense_lu_solves_and_detects_singularity() {
        let a = vec![vec![0.0, 2.0], vec![3.0, 1.0]];
        let x = solve_dense(&a, &[vec![4.0], vec![5.0]]).unwrap();
        assert!((x[0][0] - 1.0).abs() < 1e-15 && (x[1][0] - 2.0).abs() < 1e-15);
        let s = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(matches!(solve_dense(&s, &[vec![1.0], vec![1.0]]), Err(Error::Degenerate(_))));
    }
}
