//! Flat JSON form of the learner state.

use nalgebra::{DMatrix, DVector};
use safe_leveling_core::estimator::BanditState;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// `V` and `b` as row-major arrays plus the round counter `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSnapshot {
    pub dim: usize,
    pub v: Vec<f64>,
    pub b: Vec<f64>,
    pub t: usize,
}

impl StateSnapshot {
    pub fn of(state: &BanditState) -> Self {
        Self {
            dim: state.dim(),
            v: state.design_row_major(),
            b: state.response().as_slice().to_vec(),
            t: state.round(),
        }
    }

    /// Rebuilds the state; the inverse and estimate are recomputed.
    pub fn restore(&self) -> Result<BanditState, CliError> {
        let d = self.dim;
        if self.v.len() != d * d || self.b.len() != d {
            return Err(CliError::Config(format!("snapshot arrays do not match dim {d}")));
        }
        let design = DMatrix::from_row_slice(d, d, &self.v);
        BanditState::from_parts(design, DVector::from_column_slice(&self.b), self.t).map_err(CliError::from)
    }
}
