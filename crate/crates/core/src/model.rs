//! Domain vocabulary: contexts, actions, pseudo-actions and problem parameters.

use alloc::vec::Vec;

use nalgebra::DVector;
use thiserror::Error;

use crate::error::{Error, Result};
use crate::linalg::all_finite;

/// Observed side information `z` for one round.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(transparent))]
pub struct Context(Vec<f64>);

impl Context {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if !all_finite(&values) {
            return Err(Error::NonFinite("context"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Decision variables `a` chosen by the learner.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(transparent))]
pub struct Action(Vec<f64>);

impl Action {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if !all_finite(&values) {
            return Err(Error::NonFinite("action"));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// The regression feature `x = z ⋄ a`.
///
/// Construction enforces `‖x‖₂ ≤ L`, so code holding a `PseudoAction` may
/// assume the norm bound without re-checking it.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoAction {
    values: DVector<f64>,
}

impl PseudoAction {
    pub fn new(values: Vec<f64>, norm_bound: f64) -> Result<Self> {
        if !all_finite(&values) {
            return Err(Error::NonFinite("pseudo-action"));
        }
        let norm = euclidean_norm(&values);
        if norm > norm_bound {
            return Err(Error::NormBound { norm, bound: norm_bound });
        }
        Ok(Self { values: DVector::from_vec(values) })
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn values(&self) -> &[f64] {
        self.values.as_slice()
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        euclidean_norm(self.values.as_slice())
    }

    /// `xᵀθ`.
    pub fn dot(&self, theta: &DVector<f64>) -> f64 {
        self.values.dot(theta)
    }
}

fn euclidean_norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum::<f64>())
}

/// Known problem constants shared by the learner, the environment and the
/// bound evaluators.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(deny_unknown_fields))]
pub struct ProblemParams {
    pub context_dim: usize,
    pub action_dim: usize,
    /// Target level `K`.
    pub target: f64,
    /// Lower safety bound `C1`.
    pub safe_lower: f64,
    /// Upper safety bound `C2`.
    pub safe_upper: f64,
    /// Sub-Gaussian scale `R` of the outcome noise.
    pub noise_scale: f64,
    /// Bound `S` on `‖θ*‖₂`.
    pub theta_norm_bound: f64,
    /// Bound `L` on every pseudo-action's norm.
    pub action_norm_bound: f64,
    /// Ridge regularizer `λ`.
    pub ridge: f64,
    /// Global failure probability `δ`.
    pub failure_prob: f64,
    /// Number of rounds `T`.
    pub horizon: usize,
    /// Radius `ε` of the leveler-existence neighborhood. Only the bound
    /// evaluators read it; the policies never do.
    #[cfg_attr(feature = "serde", serde(default, skip_serializing_if = "Option::is_none"))]
    pub leveler_radius: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ParamViolation {
    #[error("context_dim + action_dim must be at least 1")]
    ZeroDimension,
    #[error("action_dim must be at least 1")]
    NoActionDimension,
    #[error("non-finite parameter")]
    NonFinite,
    #[error("K below C1")]
    TargetBelowLower,
    #[error("K above C2")]
    TargetAboveUpper,
    #[error("delta must lie in (0, 1)")]
    FailureProbOutOfRange,
    #[error("R must be nonnegative")]
    NegativeNoiseScale,
    #[error("S must be positive")]
    NonPositiveThetaBound,
    #[error("L must be positive")]
    NonPositiveNormBound,
    #[error("lambda < max{{1,L²}}")]
    RidgeTooSmall,
    #[error("T must be at least 1")]
    ZeroHorizon,
    #[error("epsilon must be positive")]
    NonPositiveLevelerRadius,
}

impl ProblemParams {
    /// `d = d_z + d_a`.
    pub fn dim(&self) -> usize {
        self.context_dim + self.action_dim
    }

    /// Half-width `(C2 − C1)/2` of the safe interval.
    pub fn half_width(&self) -> f64 {
        0.5 * (self.safe_upper - self.safe_lower)
    }

    /// `z ⋄ a`, checked against the configured dimensions and norm bound.
    pub fn compose(&self, z: &Context, a: &Action) -> Result<PseudoAction> {
        if z.len() != self.context_dim {
            return Err(Error::DimensionMismatch { expected: self.context_dim, actual: z.len() });
        }
        if a.len() != self.action_dim {
            return Err(Error::DimensionMismatch { expected: self.action_dim, actual: a.len() });
        }
        compose(z, a, self.action_norm_bound)
    }
}

/// `z ⋄ a` with only the norm bound checked.
pub fn compose(z: &Context, a: &Action, norm_bound: f64) -> Result<PseudoAction> {
    let mut values = Vec::with_capacity(z.len() + a.len());
    values.extend_from_slice(z.values());
    values.extend_from_slice(a.values());
    PseudoAction::new(values, norm_bound)
}

/// Returns the first violated parameter invariant.
pub fn validate_params(p: &ProblemParams) -> core::result::Result<(), ParamViolation> {
    if p.dim() == 0 {
        return Err(ParamViolation::ZeroDimension);
    }
    if p.action_dim == 0 {
        return Err(ParamViolation::NoActionDimension);
    }
    let reals = [
        p.target,
        p.safe_lower,
        p.safe_upper,
        p.noise_scale,
        p.theta_norm_bound,
        p.action_norm_bound,
        p.ridge,
        p.failure_prob,
        p.leveler_radius.unwrap_or(1.0),
    ];
    if !all_finite(&reals) {
        return Err(ParamViolation::NonFinite);
    }
    if p.target < p.safe_lower {
        return Err(ParamViolation::TargetBelowLower);
    }
    if p.target > p.safe_upper {
        return Err(ParamViolation::TargetAboveUpper);
    }
    if !(p.failure_prob > 0.0 && p.failure_prob < 1.0) {
        return Err(ParamViolation::FailureProbOutOfRange);
    }
    if p.noise_scale < 0.0 {
        return Err(ParamViolation::NegativeNoiseScale);
    }
    if p.theta_norm_bound <= 0.0 {
        return Err(ParamViolation::NonPositiveThetaBound);
    }
    if p.action_norm_bound <= 0.0 {
        return Err(ParamViolation::NonPositiveNormBound);
    }
    let l2 = p.action_norm_bound * p.action_norm_bound;
    if p.ridge < l2.max(1.0) {
        return Err(ParamViolation::RidgeTooSmall);
    }
    if p.horizon == 0 {
        return Err(ParamViolation::ZeroHorizon);
    }
    if let Some(eps) = p.leveler_radius {
        if eps <= 0.0 {
            return Err(ParamViolation::NonPositiveLevelerRadius);
        }
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;

    pub(crate) fn params(context_dim: usize, action_dim: usize) -> ProblemParams {
        ProblemParams {
            context_dim,
            action_dim,
            target: 0.15,
            safe_lower: 0.0,
            safe_upper: 0.5,
            noise_scale: 0.1,
            theta_norm_bound: 1.0,
            action_norm_bound: 1.0,
            ridge: 1.0,
            failure_prob: 0.05,
            horizon: 450,
            leveler_radius: None,
        }
    }

    fn ctx(v: &[f64]) -> Context {
        Context::new(v.to_vec()).unwrap()
    }

    fn act(v: &[f64]) -> Action {
        Action::new(v.to_vec()).unwrap()
    }

    #[test]
    fn compose_appends() {
        let mut p = params(2, 1);
        p.action_norm_bound = 4.0;
        p.ridge = 16.0;
        let x = p.compose(&ctx(&[1.0, 2.0]), &act(&[3.0])).unwrap();
        assert_eq!(x.values(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn compose_empty_context() {
        let mut p = params(0, 1);
        p.action_norm_bound = 5.0;
        p.ridge = 25.0;
        let x = p.compose(&ctx(&[]), &act(&[5.0])).unwrap();
        assert_eq!(x.values(), &[5.0]);
    }

    #[test]
    fn compose_zero_vector() {
        let p = params(2, 1);
        let x = p.compose(&ctx(&[0.0, 0.0]), &act(&[0.0])).unwrap();
        assert_eq!(x.values(), &[0.0, 0.0, 0.0]);
        assert_eq!(x.norm(), 0.0);
    }

    #[test]
    fn compose_rejects_dimension_mismatch() {
        let p = params(2, 1);
        let err = p.compose(&ctx(&[1.0]), &act(&[0.0])).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 2, actual: 1 });
        let err = p.compose(&ctx(&[0.0, 0.0]), &act(&[0.0, 0.0])).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 1, actual: 2 });
    }

    #[test]
    fn pseudo_action_rejects_norm_violation() {
        assert!(matches!(PseudoAction::new(vec![1.0, 1.0], 1.0), Err(Error::NormBound { .. })));
        assert!(PseudoAction::new(vec![0.6, 0.8], 1.0).is_ok());
        assert!(matches!(PseudoAction::new(vec![f64::NAN], 1.0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn validate_paper_levels() {
        let mut p = params(2, 1);
        p.safe_lower = 70.0;
        p.target = 112.5;
        p.safe_upper = 180.0;
        assert_eq!(validate_params(&p), Ok(()));
    }

    #[test]
    fn validate_reports_target_below_lower() {
        let mut p = params(2, 1);
        p.safe_lower = 1.0;
        p.target = 0.0;
        p.safe_upper = 2.0;
        let v = validate_params(&p).unwrap_err();
        assert_eq!(v, ParamViolation::TargetBelowLower);
        assert_eq!(v.to_string(), "K below C1");
    }

    #[test]
    fn validate_reports_small_ridge() {
        // max{1, 1²} = 1 > 0.5
        let mut p = params(2, 1);
        p.ridge = 0.5;
        p.action_norm_bound = 1.0;
        let v = validate_params(&p).unwrap_err();
        assert_eq!(v, ParamViolation::RidgeTooSmall);
        assert_eq!(v.to_string(), "lambda < max{1,L²}");
        // L = 2 needs λ ≥ 4
        p.action_norm_bound = 2.0;
        p.ridge = 3.9;
        assert_eq!(validate_params(&p), Err(ParamViolation::RidgeTooSmall));
        p.ridge = 4.0;
        assert_eq!(validate_params(&p), Ok(()));
    }

    #[test]
    fn validate_other_ranges() {
        let mut p = params(2, 1);
        p.failure_prob = 1.0;
        assert_eq!(validate_params(&p), Err(ParamViolation::FailureProbOutOfRange));
        let mut p = params(2, 1);
        p.horizon = 0;
        assert_eq!(validate_params(&p), Err(ParamViolation::ZeroHorizon));
        let mut p = params(2, 1);
        p.target = 0.6;
        assert_eq!(validate_params(&p), Err(ParamViolation::TargetAboveUpper));
        let mut p = params(2, 1);
        p.noise_scale = -0.1;
        assert_eq!(validate_params(&p), Err(ParamViolation::NegativeNoiseScale));
        let mut p = params(2, 1);
        p.leveler_radius = Some(0.0);
        assert_eq!(validate_params(&p), Err(ParamViolation::NonPositiveLevelerRadius));
    }

    proptest! {
        #[test]
        fn compose_is_length_additive_and_order_preserving(
            z in proptest::collection::vec(-0.3f64..0.3, 0..5),
            a in proptest::collection::vec(-0.3f64..0.3, 1..4),
        ) {
            let x = compose(&ctx(&z), &act(&a), 10.0).unwrap();
            prop_assert_eq!(x.dim(), z.len() + a.len());
            prop_assert_eq!(&x.values()[..z.len()], &z[..]);
            prop_assert_eq!(&x.values()[z.len()..], &a[..]);
        }

        #[test]
        fn accepted_pseudo_actions_respect_bound(
            v in proptest::collection::vec(-1.0f64..1.0, 1..6),
            bound in 0.1f64..2.0,
        ) {
            if let Ok(x) = PseudoAction::new(v, bound) {
                prop_assert!(x.norm() <= bound);
            }
        }
    }
}
