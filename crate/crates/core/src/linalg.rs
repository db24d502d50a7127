//! Dense linear-algebra helpers shared by the estimation and inference code.
//!
//! Matrices are `nalgebra::DMatrix<f64>`. The Kronecker and vec conventions here
//! fix the coefficient ordering used everywhere else in the crate.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen};

use crate::error::{Error, Result};

/// Largest condition number accepted by the inversion helpers.
pub const MAX_CONDITION: f64 = 1e12;

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Kronecker product with the column factors interleaved the other way round.
///
/// For `p` of shape `m x n` and `q` of shape `n2 x m`, returns the `(m*n2) x (m*n)`
/// matrix whose entry at row `k*n2 + s`, column `k2*n + s2` is `p[(k, s2)] * q[(s, k2)]`.
/// This is `(p (x) q)` post-multiplied by a commutation matrix, and is the form
/// taken by the cross-pairing term of a fourth moment `E[(u (x) x)(v (x) y)']`.
pub fn kron_commuted(p: &DMatrix<f64>, q: &DMatrix<f64>) -> DMatrix<f64> {
    let (m, n) = p.shape();
    let (n2, m2) = q.shape();
    assert_eq!(m, m2, "kron_commuted: p rows must equal q cols");
    let mut out = DMatrix::zeros(m * n2, m * n);
    for k in 0..m {
        for s in 0..n2 {
            let row = k * n2 + s;
            for k2 in 0..m {
                let qv = q[(s, k2)];
                if qv == 0.0 {
                    continue;
                }
                for s2 in 0..n {
                    out[(row, k2 * n + s2)] = p[(k, s2)] * qv;
                }
            }
        }
    }
    out
}

/// `vec(M')`: the rows of `m` stacked into one column.
///
/// For a coefficient matrix `B` (`p x pr`) entry `(k, s)` lands at `k * pr + s`, so the
/// coefficients of equation `k` are contiguous.
pub fn vec_transpose(m: &DMatrix<f64>) -> DVector<f64> {
    let (rows, cols) = m.shape();
    DVector::from_fn(rows * cols, |i, _| m[(i / cols, i % cols)])
}

/// Inverse of [`vec_transpose`].
pub fn unvec_transpose(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    assert_eq!(v.len(), rows * cols);
    DMatrix::from_fn(rows, cols, |i, j| v[i * cols + j])
}

/// Column-major `vec`.
pub fn vec(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest absolute asymmetry relative to the largest absolute entry.
pub fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    (m - m.transpose()).amax() / scale
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(0.0)
}

/// Inverse of a symmetric positive-definite matrix together with its condition number.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let ev = sym_eigenvalues(m);
    let (lo, hi) = (ev[0], ev[ev.len() - 1]);
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition < MAX_CONDITION) {
        return Err(Error::Collinear { condition });
    }
    let chol = symmetrize(m)
        .cholesky()
        .ok_or(Error::Collinear { condition })?;
    Ok((symmetrize(&chol.inverse()), condition))
}

/// 2-norm condition number from the singular values.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let hi = sv.max();
    let lo = sv.min();
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

/// Inverse of a general square matrix via QR, refusing ill-conditioned input.
pub fn general_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let condition = condition_number(m);
    if !(condition < MAX_CONDITION) {
        return Err(Error::Numerical(format!(
            "matrix is singular to working precision (condition {condition:.3e})"
        )));
    }
    let n = m.nrows();
    m.clone()
        .qr()
        .solve(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::Numerical("QR solve failed".into()))
}

/// Solve `m x = b` for general square `m`, refusing ill-conditioned input.
pub fn general_solve(m: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let condition = condition_number(m);
    if !(condition < MAX_CONDITION) {
        return Err(Error::Numerical(format!(
            "matrix is singular to working precision (condition {condition:.3e})"
        )));
    }
    m.clone()
        .qr()
        .solve(b)
        .ok_or_else(|| Error::Numerical("QR solve failed".into()))
}

/// A factor `L` with `L L' = m` for symmetric PSD `m`.
///
/// Cholesky when `m` is positive definite; otherwise an eigen-based square root,
/// provided no eigenvalue is below `-1e-10 * trace`.
pub fn psd_factor(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::Dimension(format!("{what} must be square")));
    }
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if asymmetry(m) > 1e-12 && m.amax() > 0.0 {
        return Err(Error::Covariance(format!("{what} is not symmetric")));
    }
    let sym = symmetrize(m);
    if let Some(ch) = sym.clone().cholesky() {
        return Ok(ch.l());
    }
    let eig = SymmetricEigen::new(sym);
    let trace: f64 = eig.eigenvalues.iter().map(|v| v.abs()).sum();
    let tol = 1e-10 * trace.max(f64::MIN_POSITIVE);
    let lo = eig.eigenvalues.min();
    if lo < -tol {
        return Err(Error::Covariance(format!(
            "{what} has negative eigenvalue {lo:.3e}"
        )));
    }
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

/// Spectral radius of a general square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> Result<f64> {
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    if m.nrows() == 1 {
        return Ok(m[(0, 0)].abs());
    }
    let schur = Schur::try_new(m.clone(), 1e-14, 10_000)
        .ok_or_else(|| Error::Numerical("eigenvalue solver did not converge".into()))?;
    Ok(schur
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

/// Copy of the `rows x cols` block starting at `(r0, c0)`.
pub fn block(m: &DMatrix<f64>, r0: usize, c0: usize, rows: usize, cols: usize) -> DMatrix<f64> {
    m.view((r0, c0), (rows, cols)).into_owned()
}

pub fn set_block(m: &mut DMatrix<f64>, r0: usize, c0: usize, b: &DMatrix<f64>) {
    m.view_mut((r0, c0), b.shape()).copy_from(b);
}

/// Relative max-entry discrepancy `max|a-b| / max(max|b|, floor)`.
pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = b.amax().max(1e-300);
    (a - b).amax() / scale
}
