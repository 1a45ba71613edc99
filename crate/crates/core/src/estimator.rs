//! Regularized least-squares state.
//!
//! `V_t = λI + Σ_{i<t} x_i x_iᵀ`, `b_t = Σ_{i<t} o_i x_i` and
//! `θ̂_t = V_t⁻¹ b_t`. The inverse is carried along with Sherman-Morrison
//! rank-one updates and rebuilt from a Cholesky factorization of `V` every
//! [`REFRESH_INTERVAL`] updates so that rounding drift cannot accumulate.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, m_norm, quad_form, spd_inverse, symmetrize};
use crate::model::{ProblemParams, PseudoAction};

/// Number of rank-one updates between full re-factorizations of `V`.
pub const REFRESH_INTERVAL: usize = 256;

#[derive(Debug, Clone)]
pub struct BanditState {
    design: DMatrix<f64>,
    design_inv: DMatrix<f64>,
    response: DVector<f64>,
    theta_hat: DVector<f64>,
    round: usize,
    log_det: f64,
    since_refresh: usize,
}

impl BanditState {
    /// `V = λI`, `b = 0`, `θ̂ = 0`, `t = 1`.
    pub fn new(params: &ProblemParams) -> Self {
        Self::with_dimension(params.dim(), params.ridge)
    }

    pub fn with_dimension(dim: usize, ridge: f64) -> Self {
        Self {
            design: DMatrix::from_diagonal_element(dim, dim, ridge),
            design_inv: DMatrix::from_diagonal_element(dim, dim, 1.0 / ridge),
            response: DVector::zeros(dim),
            theta_hat: DVector::zeros(dim),
            round: 1,
            log_det: dim as f64 * libm::log(ridge),
            since_refresh: 0,
        }
    }

    /// Rebuilds a state from a checkpoint of `(V, b, t)`.
    pub fn from_parts(design: DMatrix<f64>, response: DVector<f64>, round: usize) -> Result<Self> {
        let dim = response.len();
        if design.nrows() != dim || design.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, actual: design.nrows() });
        }
        if !all_finite(design.as_slice()) || !all_finite(response.as_slice()) {
            return Err(Error::NonFinite("bandit state"));
        }
        if round == 0 {
            return Err(Error::Config("round index is 1-based".into()));
        }
        let mut design = design;
        symmetrize(&mut design);
        let (design_inv, log_det) = spd_inverse(&design)?;
        let theta_hat = &design_inv * &response;
        Ok(Self { design, design_inv, response, theta_hat, round, log_det, since_refresh: 0 })
    }

    /// Folds one observation into the state and advances the round index.
    pub fn update(&mut self, x: &PseudoAction, outcome: f64) -> Result<()> {
        if !outcome.is_finite() {
            return Err(Error::NonFinite("outcome"));
        }
        let x = x.as_vector();
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), actual: x.len() });
        }

        let v_inv_x = &self.design_inv * x;
        let denom = 1.0 + x.dot(&v_inv_x);
        self.design_inv.ger(-1.0 / denom, &v_inv_x, &v_inv_x, 1.0);
        symmetrize(&mut self.design_inv);
        self.design.ger(1.0, x, x, 1.0);
        self.response.axpy(outcome, x, 1.0);
        // matrix determinant lemma
        self.log_det += libm::log(denom);
        self.round += 1;
        self.since_refresh += 1;

        if self.since_refresh >= REFRESH_INTERVAL {
            self.refresh()?;
        }
        self.theta_hat = &self.design_inv * &self.response;
        Ok(())
    }

    /// Recomputes `V⁻¹` and `log det V` from a fresh factorization of `V`.
    pub fn refresh(&mut self) -> Result<()> {
        let (inv, log_det) = spd_inverse(&self.design)?;
        self.design_inv = inv;
        self.log_det = log_det;
        self.since_refresh = 0;
        self.theta_hat = &self.design_inv * &self.response;
        Ok(())
    }

    /// `‖x‖_{V⁻¹} = √(xᵀV⁻¹x)`.
    pub fn weighted_norm(&self, x: &PseudoAction) -> f64 {
        self.inverse_norm(x.as_vector())
    }

    pub fn inverse_norm(&self, x: &DVector<f64>) -> f64 {
        m_norm(&self.design_inv, x)
    }

    /// `‖θ‖_V = √(θᵀVθ)`.
    pub fn design_norm(&self, theta: &DVector<f64>) -> f64 {
        m_norm(&self.design, theta)
    }

    pub fn dim(&self) -> usize {
        self.response.len()
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn design_inv(&self) -> &DMatrix<f64> {
        &self.design_inv
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    pub fn theta_hat(&self) -> &DVector<f64> {
        &self.theta_hat
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// `V` flattened row-major, for checkpointing.
    pub fn design_row_major(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(self.design[(i, j)]);
            }
        }
        out
    }

    /// `xᵀV⁻¹x` without the square root.
    pub fn inverse_quad(&self, x: &DVector<f64>) -> f64 {
        quad_form(&self.design_inv, x)
    }
}
