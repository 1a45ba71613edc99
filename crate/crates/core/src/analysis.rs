//! Regret accounting, event monitors and closed-form bound evaluators.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::model::ProblemParams;
use crate::safety::ConfidenceSchedule;

/// One round's record.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RoundLog {
    pub t: usize,
    pub context_id: usize,
    pub cycle: usize,
    pub context: Vec<f64>,
    pub chosen: Vec<f64>,
    pub outcome: f64,
    /// `|xᵀθ* − K|`
    pub regret: f64,
    /// Outcome mean left `[C1, C2]`.
    pub violation: bool,
    /// `‖x_t‖_{V_t⁻¹}`, against the design before this round's update.
    pub weighted_norm: f64,
    /// `‖θ̂ − θ*‖_V ≤ β_t`
    pub e_hat: bool,
    /// `‖θ̃ − θ̂‖_V ≤ γ_t`
    pub e_tilde: bool,
    /// Every candidate's weighted norm is below [`d_event_threshold`].
    pub d_event: bool,
    /// `|xᵀ(θ* − θ̃)|`
    pub r1: f64,
    /// `|xᵀθ̃ − K|`
    pub r2: f64,
    pub from_seed: bool,
}

pub fn prefix_sums(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    values
        .into_iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect()
}

/// Running total of instantaneous regret.
pub fn cumulative_regret(logs: &[RoundLog]) -> Vec<f64> {
    prefix_sums(logs.iter().map(|l| l.regret))
}

/// `G = min{(C2 − C1)/2, εL}` and whether `ε` was missing (then `G = C`).
pub fn g_value(params: &ProblemParams) -> (f64, bool) {
    let c = params.half_width();
    match params.leveler_radius {
        Some(eps) => (c.min(eps * params.action_norm_bound), false),
        None => (c, true),
    }
}

/// `G / (2(β_T + γ_T))`.
pub fn d_event_threshold(params: &ProblemParams, schedule: &ConfidenceSchedule) -> f64 {
    let t = params.horizon;
    g_value(params).0 / (2.0 * (schedule.beta(t) + schedule.gamma(t)))
}

/// `√(2Td·log(1 + TL²/(dλ)))`.
pub fn prop4_rhs(rounds: usize, dim: usize, action_norm_bound: f64, ridge: f64) -> f64 {
    if rounds == 0 {
        return 0.0;
    }
    let t = rounds as f64;
    let d = dim as f64;
    let l2 = action_norm_bound * action_norm_bound;
    libm::sqrt(2.0 * t * d * libm::log(1.0 + t * l2 / (d * ridge)))
}

/// Shared factor of the bad-round count and its regret term:
/// `log(1 + L²/(λ·ℓ)) / ℓ` with `ℓ = log(1 + (G/(2(β_T + γ_T)))²)`.
fn bad_round_factor(params: &ProblemParams, beta_t: f64, gamma_t: f64) -> f64 {
    let q = g_value(params).0 / (2.0 * (beta_t + gamma_t));
    let ell = libm::log1p(q * q);
    let l2 = params.action_norm_bound * params.action_norm_bound;
    libm::log1p(l2 / (params.ridge * ell)) / ell
}

/// Upper bound on the number of rounds where the event `D_t` fails.
pub fn lemma1_bound(params: &ProblemParams, beta_t: f64, gamma_t: f64) -> f64 {
    3.0 * params.dim() as f64 * bad_round_factor(params, beta_t, gamma_t)
}

/// High-probability upper bound on cumulative regret at the horizon.
///
/// `p_opt` is the optimism probability of the perturbation; `0` makes the
/// bound infinite and is rejected.
pub fn theorem1_bound(params: &ProblemParams, schedule: &ConfidenceSchedule, p_opt: f64) -> Result<f64> {
    if !(p_opt > 0.0 && p_opt <= 1.0) {
        return Err(Error::DivergentBound("optimism probability must lie in (0, 1]"));
    }
    if params.leveler_radius.is_some_and(|e| e.is_nan() || e <= 0.0) {
        return Err(Error::DivergentBound("leveler radius must be positive"));
    }
    let horizon = params.horizon;
    let t = horizon as f64;
    let d = params.dim() as f64;
    let l2 = params.action_norm_bound * params.action_norm_bound;
    let beta_t = schedule.beta(horizon);
    let gamma_t = schedule.gamma(horizon);

    let potential = prop4_rhs(horizon, params.dim(), params.action_norm_bound, params.ridge);
    let first = (beta_t + (1.0 + 2.0 / p_opt) * gamma_t) * potential;
    let second =
        (2.0 * gamma_t / p_opt) * libm::sqrt(8.0 * t * l2 / params.ridge * libm::log(4.0 / params.failure_prob));
    let third = 6.0 * params.half_width() * d * bad_round_factor(params, beta_t, gamma_t);
    Ok(first + second + third)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Prop4Check {
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

/// Sum of logged weighted norms against the elliptical potential bound.
pub fn prop4_check(logs: &[RoundLog], params: &ProblemParams) -> Prop4Check {
    let lhs: f64 = logs.iter().map(|l| l.weighted_norm).sum();
    let rhs = prop4_rhs(logs.len(), params.dim(), params.action_norm_bound, params.ridge);
    Prop4Check { lhs, rhs, ok: lhs <= rhs + 1e-9 }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EventSummary {
    pub rounds: usize,
    pub not_e_hat: usize,
    pub not_e_tilde: usize,
    pub not_d: usize,
    pub lemma1_bound: f64,
    pub lemma1_ok: bool,
    /// `r_t ≤ r_{t,1} + r_{t,2}` on every round.
    pub decomposition_ok: bool,
}

pub fn event_monitor(logs: &[RoundLog], params: &ProblemParams, schedule: &ConfidenceSchedule) -> EventSummary {
    let bound = lemma1_bound(params, schedule.beta(params.horizon), schedule.gamma(params.horizon));
    let not_d = logs.iter().filter(|l| !l.d_event).count();
    EventSummary {
        rounds: logs.len(),
        not_e_hat: logs.iter().filter(|l| !l.e_hat).count(),
        not_e_tilde: logs.iter().filter(|l| !l.e_tilde).count(),
        not_d,
        lemma1_bound: bound,
        lemma1_ok: not_d as f64 <= bound,
        decomposition_ok: logs.iter().all(|l| l.regret <= l.r1 + l.r2 + 1e-12),
    }
}

/// Fraction of runs in which the confidence event failed at least once;
/// compare with the `δ/4` budget.
pub fn e_hat_failure_rate(summaries: &[EventSummary]) -> f64 {
    if summaries.is_empty() {
        return 0.0;
    }
    summaries.iter().filter(|s| s.not_e_hat > 0).count() as f64 / summaries.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundReport {
    /// Absent when no optimism probability was available.
    pub theorem1_value: Option<f64>,
    pub lemma1_tau_bound: f64,
    pub prop4_potential_bound: f64,
    pub g: f64,
    pub c: f64,
    /// `G` fell back to `C` because no leveler radius was configured.
    pub g_from_missing_radius: bool,
    pub p_used: Option<f64>,
    pub beta_horizon: f64,
    pub gamma_horizon: f64,
    pub delta_prime: f64,
    pub horizon: usize,
    pub dim: usize,
    pub params: ProblemParams,
}

pub fn bound_report(params: &ProblemParams, schedule: &ConfidenceSchedule, p_used: Option<f64>) -> Result<BoundReport> {
    let horizon = params.horizon;
    let beta_t = schedule.beta(horizon);
    let gamma_t = schedule.gamma(horizon);
    let (g, flagged) = g_value(params);
    let theorem1_value = match p_used {
        Some(p) => Some(theorem1_bound(params, schedule, p)?),
        None => None,
    };
    Ok(BoundReport {
        theorem1_value,
        lemma1_tau_bound: lemma1_bound(params, beta_t, gamma_t),
        prop4_potential_bound: prop4_rhs(horizon, params.dim(), params.action_norm_bound, params.ridge),
        g,
        c: params.half_width(),
        g_from_missing_radius: flagged,
        p_used,
        beta_horizon: beta_t,
        gamma_horizon: gamma_t,
        delta_prime: schedule.delta_prime,
        horizon,
        dim: params.dim(),
        params: params.clone(),
    })
}
