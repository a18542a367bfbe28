use nalgebra::{SMatrix, SVector};

use super::GeomError;

/// Solves `a x = b` for a small symmetric positive-definite `a`.
///
/// Only the lower triangle of `a` is read. A matrix that is not positive
/// definite returns [`GeomError::NotPositiveDefinite`]; callers add damping
/// and retry.
pub fn cholesky_solve<const N: usize>(a: &[[f64; N]; N], b: &[f64; N]) -> Result<[f64; N], GeomError> {
    let m = SMatrix::<f64, N, N>::from_fn(|i, j| if j <= i { a[i][j] } else { a[j][i] });
    let chol = m.cholesky().ok_or(GeomError::NotPositiveDefinite)?;
    let x = chol.solve(&SVector::<f64, N>::from_column_slice(b));
    if x.iter().any(|v| !v.is_finite()) {
        return Err(GeomError::NotPositiveDefinite);
    }
    Ok(core::array::from_fn(|i| x[i]))
}
