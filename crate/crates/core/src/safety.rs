//! Confidence radii and the proxy safe set.
//!
//! The confidence ellipsoid at round `t` is `{θ : ‖θ − θ̂_t‖_{V_t} ≤ β_t}`.
//! Over that ellipsoid `xᵀθ` ranges exactly over
//! `[xᵀθ̂ − β_t‖x‖_{V⁻¹}, xᵀθ̂ + β_t‖x‖_{V⁻¹}]`, so a pseudo-action is
//! certified safe when that whole interval sits inside `[C1, C2]`.

use nalgebra::DVector;

use crate::estimator::BanditState;
use crate::model::{ProblemParams, PseudoAction};

/// Radii `β_t(δ')` and `γ_t(δ')` with `δ' = δ/(4T)`.
///
/// The concentration constants are those of an isotropic Gaussian
/// perturbation with scale `σ`: `c = 2σ²`, `c' = 2`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConfidenceSchedule {
    pub delta_prime: f64,
    pub dim: usize,
    pub noise_scale: f64,
    pub theta_norm_bound: f64,
    pub action_norm_bound: f64,
    pub ridge: f64,
    pub c: f64,
    pub c_prime: f64,
}

impl ConfidenceSchedule {
    pub fn new(params: &ProblemParams, sigma: f64) -> Self {
        let delta_prime = params.failure_prob / (4.0 * params.horizon as f64);
        Self::with_delta_prime(params, delta_prime, sigma)
    }

    pub fn with_delta_prime(params: &ProblemParams, delta_prime: f64, sigma: f64) -> Self {
        Self {
            delta_prime,
            dim: params.dim(),
            noise_scale: params.noise_scale,
            theta_norm_bound: params.theta_norm_bound,
            action_norm_bound: params.action_norm_bound,
            ridge: params.ridge,
            c: 2.0 * sigma * sigma,
            c_prime: 2.0,
        }
    }

    /// `β_t = R√(d·log((1 + (t−1)L²/λ)/δ')) + √λ·S`.
    pub fn beta(&self, t: usize) -> f64 {
        let d = self.dim as f64;
        let l2 = self.action_norm_bound * self.action_norm_bound;
        let growth = 1.0 + (t.saturating_sub(1) as f64) * l2 / self.ridge;
        let log_term = libm::log(growth / self.delta_prime).max(0.0);
        self.noise_scale * libm::sqrt(d * log_term) + libm::sqrt(self.ridge) * self.theta_norm_bound
    }

    /// `√(c·d·log(c'·d/δ'))`, the high-probability bound on `‖η‖₂`.
    pub fn eta_radius(&self) -> f64 {
        let d = self.dim as f64;
        libm::sqrt(self.c * d * libm::log(self.c_prime * d / self.delta_prime).max(0.0))
    }

    /// `γ_t = β_t·√(c·d·log(c'·d/δ'))`.
    pub fn gamma(&self, t: usize) -> f64 {
        self.beta(t) * self.eta_radius()
    }
}

/// `β_t(δ')` with `δ' = δ/(4T)` and the default perturbation scale.
pub fn beta(t: usize, params: &ProblemParams) -> f64 {
    ConfidenceSchedule::new(params, 1.0).beta(t)
}

/// Minimum and maximum of `xᵀθ` over `{θ : ‖θ − θ̂‖_V ≤ radius}`, with the
/// parameters attaining them.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipsoidExtrema {
    pub min: f64,
    pub max: f64,
    /// `θ̂ − radius·V⁻¹x/‖x‖_{V⁻¹}`.
    pub minimizer: DVector<f64>,
    /// `θ̂ + radius·V⁻¹x/‖x‖_{V⁻¹}`.
    pub maximizer: DVector<f64>,
}

pub fn ellipsoid_extrema(state: &BanditState, x: &PseudoAction, radius: f64) -> EllipsoidExtrema {
    let center = x.dot(state.theta_hat());
    let width = state.weighted_norm(x);
    let spread = radius * width;
    let (minimizer, maximizer) = if width > 0.0 {
        let dir = (state.design_inv() * x.as_vector()) * (radius / width);
        (state.theta_hat() - &dir, state.theta_hat() + &dir)
    } else {
        (state.theta_hat().clone(), state.theta_hat().clone())
    };
    EllipsoidExtrema { min: center - spread, max: center + spread, minimizer, maximizer }
}

/// Outcome of the proxy safe-set test for one pseudo-action.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SafeSetDecision {
    pub lower_value: f64,
    pub upper_value: f64,
    pub is_safe: bool,
    pub from_seed: bool,
}

/// Certifies `x` against `[lower, upper]` for every parameter in the
/// ellipsoid of the given radius. Boundaries are inclusive with no slack.
pub fn certify(state: &BanditState, x: &PseudoAction, radius: f64, lower: f64, upper: f64) -> SafeSetDecision {
    let center = x.dot(state.theta_hat());
    let spread = radius * state.weighted_norm(x);
    let lower_value = center - spread;
    let upper_value = center + spread;
    SafeSetDecision {
        lower_value,
        upper_value,
        is_safe: lower_value >= lower && upper_value <= upper,
        from_seed: false,
    }
}

/// Proxy safe-set membership at round `t` with radius `β_t(δ')`.
pub fn is_safe(
    state: &BanditState,
    x: &PseudoAction,
    t: usize,
    params: &ProblemParams,
    schedule: &ConfidenceSchedule,
) -> SafeSetDecision {
    certify(state, x, schedule.beta(t), params.safe_lower, params.safe_upper)
}
