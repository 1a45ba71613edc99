use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) fn quad_form(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    let n = x.len();
    let mut acc = 0.0;
    for j in 0..n {
        let xj = x[j];
        if xj == 0.0 {
            continue;
        }
        let mut col = 0.0;
        for i in 0..n {
            col += m[(i, j)] * x[i];
        }
        acc += col * xj;
    }
    acc
}

/// `sqrt(max(0, xᵀ M x))`.
pub(crate) fn m_norm(m: &DMatrix<f64>, x: &DVector<f64>) -> f64 {
    libm::sqrt(quad_form(m, x).max(0.0))
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Inverse and log-determinant of a symmetric positive-definite matrix.
pub(crate) fn spd_inverse(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64)> {
    let chol = m.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| libm::log(*v)).sum::<f64>();
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok((inv, log_det))
}

pub(crate) fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}
