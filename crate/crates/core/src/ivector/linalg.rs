use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Error, Result};

pub(crate) fn cholesky(m: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m).ok_or_else(|| Error::Numerical(format!("{what} is not positive definite")))
}

pub(crate) fn logdet(c: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Inverse and log-determinant of a symmetric positive definite matrix.
pub(crate) fn spd_inverse(m: DMatrix<f64>, what: &str) -> Result<(DMatrix<f64>, f64)> {
    let c = cholesky(m, what)?;
    let ld = logdet(&c);
    Ok((symmetrize(c.inverse()), ld))
}

pub(crate) fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}
