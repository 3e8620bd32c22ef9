//! Small dense and banded solvers used by the PDE and rate kernels.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// In-place Cholesky factorisation of a dense row-major `n×n` SPD matrix.
/// The lower factor overwrites the lower triangle.
pub fn cholesky_in_place<S: Real>(a: &mut [S], n: usize) -> Result<()> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > S::zero()) {
            return Err(Error::NoSolution(format!("matrix not positive definite at pivot {j}")));
        }
        let d = d.sqrt();
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    Ok(())
}

/// Solves `L Lᵀ x = b` given the factor from [`cholesky_in_place`].
pub fn cholesky_solve<S: Real>(l: &[S], n: usize, b: &mut [S]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Inverse of a small SPD matrix (row-major).
pub fn spd_inverse<S: Real>(a: &[S], n: usize) -> Result<Vec<S>> {
    let mut l = a.to_vec();
    cholesky_in_place(&mut l, n)?;
    let mut inv = vec![S::zero(); n * n];
    let mut col = vec![S::zero(); n];
    for j in 0..n {
        col.iter_mut().for_each(|v| *v = S::zero());
        col[j] = S::one();
        cholesky_solve(&l, n, &mut col);
        for i in 0..n {
            inv[i * n + j] = col[i];
        }
    }
    Ok(inv)
}

/// Thomas algorithm for a non-periodic tridiagonal system.
/// `lower[i]` multiplies `x[i-1]`, `upper[i]` multiplies `x[i+1]`.
fn thomas<S: Real>(lower: &[S], diag: &[S], upper: &[S], rhs: &mut [S]) -> Result<()> {
    let n = diag.len();
    let mut c = vec![S::zero(); n];
    let mut beta = diag[0];
    if beta == S::zero() {
        return Err(Error::NoSolution("zero pivot in tridiagonal solve".into()));
    }
    rhs[0] /= beta;
    for i in 1..n {
        c[i] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * c[i];
        if beta == S::zero() {
            return Err(Error::NoSolution("zero pivot in tridiagonal solve".into()));
        }
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        let next = rhs[i + 1];
        rhs[i] -= c[i + 1] * next;
    }
    Ok(())
}

/// Solves the periodic tridiagonal system
/// `lower[i]·x[i-1] + diag[i]·x[i] + upper[i]·x[i+1] = rhs[i]` (indices mod n)
/// by the Sherman–Morrison correction of the corner entries.
pub fn solve_cyclic_tridiagonal<S: Real>(lower: &[S], diag: &[S], upper: &[S], rhs: &mut [S]) -> Result<()> {
    let n = diag.len();
    if lower.len() != n || upper.len() != n || rhs.len() != n {
        return Err(Error::GridMismatch("tridiagonal band lengths differ".into()));
    }
    if n == 1 {
        rhs[0] /= diag[0] + lower[0] + upper[0];
        return Ok(());
    }
    if n == 2 {
        let (a, b) = (diag[0], upper[0] + lower[0]);
        let (c, d) = (upper[1] + lower[1], diag[1]);
        let det = a * d - b * c;
        let (r0, r1) = (rhs[0], rhs[1]);
        rhs[0] = (d * r0 - b * r1) / det;
        rhs[1] = (a * r1 - c * r0) / det;
        return Ok(());
    }
    let alpha = upper[n - 1];
    let beta = lower[0];
    let gamma = -diag[0];
    let mut d = diag.to_vec();
    d[0] -= gamma;
    d[n - 1] -= alpha * beta / gamma;
    thomas(lower, &d, upper, rhs)?;
    let mut u = vec![S::zero(); n];
    u[0] = gamma;
    u[n - 1] = alpha;
    thomas(lower, &d, upper, &mut u)?;
    let fact = (rhs[0] + beta * rhs[n - 1] / gamma) / (S::one() + u[0] + beta * u[n - 1] / gamma);
    for i in 0..n {
        rhs[i] -= fact * u[i];
    }
    Ok(())
}
