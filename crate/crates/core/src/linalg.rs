//! Thin helpers over faer used throughout the crate.

use faer::linalg::solvers::{DenseSolveCore, Solve};
use faer::{Mat, MatRef, Side};

use crate::{Error, Result};

pub(crate) fn check_square(m: MatRef<'_, f64>, what: &str) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::ShapeMismatch(format!("{what} must be square, got {}×{}", m.nrows(), m.ncols())));
    }
    Ok(m.nrows())
}

/// Largest absolute asymmetry `|m_ij − m_ji|`.
pub(crate) fn asymmetry(m: MatRef<'_, f64>) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for j in 0..n {
        for i in (j + 1)..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub(crate) fn is_symmetric(m: MatRef<'_, f64>, rel_tol: f64) -> bool {
    asymmetry(m) <= rel_tol * m.norm_max().max(1.0)
}

/// Eigen-decomposition of a symmetric matrix; eigenvalues ascending.
pub(crate) fn sym_eigen(m: MatRef<'_, f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical { step: 0, reason: format!("eigendecomposition failed: {e:?}") })?;
    let s = evd.S();
    let values = (0..m.nrows()).map(|i| s[i]).collect();
    Ok((values, evd.U().to_owned()))
}

pub(crate) fn sym_eigenvalues(m: MatRef<'_, f64>) -> Result<Vec<f64>> {
    m.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical { step: 0, reason: format!("eigenvalue computation failed: {e:?}") })
}

/// Pseudo-inverse of a symmetric matrix, dropping eigenvalues at or below `rel_tol · λ_max`.
pub(crate) fn pinv_sym(m: MatRef<'_, f64>, rel_tol: f64) -> Result<Mat<f64>> {
    let n = check_square(m, "pinv_sym input")?;
    let (vals, vecs) = sym_eigen(m)?;
    let lmax = vals.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let cut = rel_tol * lmax;
    let mut out = Mat::<f64>::zeros(n, n);
    for (k, &lam) in vals.iter().enumerate() {
        if lam.abs() <= cut || lam == 0.0 {
            continue;
        }
        let inv = 1.0 / lam;
        for j in 0..n {
            let vj = vecs[(j, k)] * inv;
            for i in 0..n {
                out[(i, j)] += vecs[(i, k)] * vj;
            }
        }
    }
    Ok(out)
}

/// Cholesky factorization; fails when the matrix is not numerically positive definite.
pub(crate) fn cholesky(m: MatRef<'_, f64>) -> Result<faer::linalg::solvers::Llt<f64>> {
    check_square(m, "cholesky input")?;
    m.llt(Side::Lower).map_err(|_| Error::NotPositiveDefinite)
}

pub(crate) fn spd_inverse(m: MatRef<'_, f64>) -> Result<Mat<f64>> {
    Ok(cholesky(m)?.inverse())
}

pub(crate) fn spd_solve(m: MatRef<'_, f64>, rhs: MatRef<'_, f64>) -> Result<Mat<f64>> {
    Ok(cholesky(m)?.solve(rhs))
}

/// General square solve by partial-pivot LU, rejecting numerically singular systems.
pub(crate) fn lu_solve(m: MatRef<'_, f64>, rhs: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let n = check_square(m, "system matrix")?;
    if rhs.nrows() != n {
        return Err(Error::ShapeMismatch(format!("right-hand side has {} rows, expected {n}", rhs.nrows())));
    }
    let lu = m.partial_piv_lu();
    let u = lu.U();
    let mut umax = 0.0f64;
    let mut umin = f64::INFINITY;
    for i in 0..n {
        let d = u[(i, i)].abs();
        umax = umax.max(d);
        umin = umin.min(d);
    }
    if !(umin > 1e-14 * umax) {
        return Err(Error::Singular(format!("pivot ratio {:.3e}", umin / umax)));
    }
    let x = lu.solve(rhs);
    if x.has_nan() || !x.is_all_finite() {
        return Err(Error::Singular("non-finite solution".into()));
    }
    Ok(x)
}

/// `Tr(A·B)` without forming the product.
pub(crate) fn trace_of_product(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for j in 0..n {
        for i in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

pub(crate) fn hadamard(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * b[(i, j)])
}

pub(crate) fn mat_vec(m: MatRef<'_, f64>, v: &[f64]) -> Vec<f64> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum()).collect()
}

pub(crate) fn add_diagonal(m: &mut Mat<f64>, value: f64) {
    for i in 0..m.nrows().min(m.ncols()) {
        m[(i, i)] += value;
    }
}
