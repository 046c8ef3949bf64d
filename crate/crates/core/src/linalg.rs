//! Dense helpers on top of `nalgebra`. Problem sizes here are a few hundred
//! players at most, so everything is dense.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

fn check_square(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            actual: m.ncols(),
        });
    }
    Ok(())
}

/// Symmetric part `(M + Mᵀ)/2`.
pub fn symmetric_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of the symmetric part of `m`.
///
/// `xᵀ M x = xᵀ sym(M) x`, so this is the infimum of the quadratic form of
/// `m` over the unit sphere.
pub fn min_sym_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    check_square(m)?;
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let eig = symmetric_part(m).symmetric_eigen();
    Ok(eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min))
}

/// Largest eigenvalue of the symmetric part of `m`.
pub fn max_sym_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    check_square(m)?;
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    let eig = symmetric_part(m).symmetric_eigen();
    Ok(eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Singular values, unordered.
fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    if m.is_empty() {
        return DVector::zeros(0);
    }
    m.singular_values()
}

/// Spectral norm `‖M‖₂`.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).iter().copied().fold(0.0, f64::max)
}

pub fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    singular_values(m)
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn frobenius_norm(m: &DMatrix<f64>) -> f64 {
    m.norm()
}

/// Solution of `A x = b` by partial-pivot LU together with the normwise
/// backward error `‖Ax − b‖ / (‖A‖_F ‖x‖ + ‖b‖)`.
pub fn solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    check_square(a)?;
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            actual: b.len(),
        });
    }
    let x = a.clone().lu().solve(b).ok_or(Error::Singular)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    let denom = a.norm() * x.norm() + b.norm();
    let backward = if denom > 0.0 {
        (a * &x - b).norm() / denom
    } else {
        0.0
    };
    Ok((x, backward))
}
