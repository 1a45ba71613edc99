use thiserror::Error;

use crate::model::ParamViolation;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("pseudo-action norm {norm} exceeds bound {bound}")]
    NormBound { norm: f64, bound: f64 },

    #[error("invalid problem parameters: {0}")]
    InvalidParams(ParamViolation),

    #[error("seed set is empty; safety cannot be bootstrapped")]
    EmptySeedSet,

    #[error("action grid is empty")]
    EmptyGrid,

    #[error("no action in the grid is truly safe for this context")]
    InfeasibleContext,

    #[error("margined safe interval is empty (lower {lower} > upper {upper})")]
    EmptyMarginInterval { lower: f64, upper: f64 },

    #[error("only {available} margin-safe actions, {needed} requested")]
    InfeasibleSeed { needed: usize, available: usize },

    #[error("no well-posed instance after {0} draws")]
    NoWellPosedInstance(usize),

    #[error("no samples")]
    NoSamples,

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("bound diverges: {0}")]
    DivergentBound(&'static str),

    #[error("invalid configuration: {0}")]
    Config(alloc::string::String),
}

impl From<ParamViolation> for Error {
    fn from(v: ParamViolation) -> Self {
        Error::InvalidParams(v)
    }
}
