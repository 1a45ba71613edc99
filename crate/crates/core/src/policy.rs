//! Per-round decision rules over a finite action grid.
//!
//! Every rule minimizes `|xᵀθ − K|` over some candidate set; they differ in
//! which `θ` they use and which candidates they admit. Ties go to the lowest
//! candidate index, with grid entries ahead of seed entries.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};
use crate::estimator::BanditState;
use crate::model::{Action, Context, ProblemParams, PseudoAction};
use crate::safety::{certify, ConfidenceSchedule};
use crate::sampler::{perturb, PerturbationConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum PolicyKind {
    /// Thompson-sampling leveler restricted to certified and seed actions.
    SaleLts,
    /// The same leveler over the whole grid, without the safety filter.
    LeLts,
    /// Best truly-safe action under the hidden parameter (simulation only).
    Oracle,
    /// Greedy leveler restricted to the seed set.
    SeedOnly,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [PolicyKind::SaleLts, PolicyKind::LeLts, PolicyKind::Oracle, PolicyKind::SeedOnly];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::SaleLts => "sale_lts",
            PolicyKind::LeLts => "le_lts",
            PolicyKind::Oracle => "oracle",
            PolicyKind::SeedOnly => "seed_only",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(alloc::format!("unknown policy '{s}'")))
    }
}

/// A finite discretization of the action space.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionGrid {
    actions: Vec<Action>,
    /// Spacing per action dimension; zero where a dimension has one level.
    step: Vec<f64>,
}

impl ActionGrid {
    /// Cartesian grid with `points` evenly spaced levels per dimension,
    /// endpoints included. The first dimension varies slowest.
    pub fn uniform(lower: &[f64], upper: &[f64], points: usize) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), actual: upper.len() });
        }
        if points == 0 || lower.is_empty() {
            return Err(Error::EmptyGrid);
        }
        if lower.iter().zip(upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l <= u)) {
            return Err(Error::Config("grid bounds must be finite with lower ≤ upper".to_string()));
        }
        let dims = lower.len();
        let levels: Vec<Vec<f64>> = lower
            .iter()
            .zip(upper)
            .map(|(&l, &u)| {
                if points == 1 {
                    return alloc::vec![l];
                }
                let h = (u - l) / (points - 1) as f64;
                (0..points).map(|i| if i + 1 == points { u } else { l + h * i as f64 }).collect()
            })
            .collect();
        let step = lower
            .iter()
            .zip(upper)
            .map(|(&l, &u)| if points > 1 { (u - l) / (points - 1) as f64 } else { 0.0 })
            .collect();

        let total = points.checked_pow(dims as u32).ok_or(Error::Config("grid too large".into()))?;
        let mut actions = Vec::with_capacity(total);
        let mut idx = alloc::vec![0usize; dims];
        for _ in 0..total {
            actions.push(Action::new(idx.iter().zip(&levels).map(|(&i, lv)| lv[i]).collect())?);
            for k in (0..dims).rev() {
                idx[k] += 1;
                if idx[k] < points {
                    break;
                }
                idx[k] = 0;
            }
        }
        Ok(Self { actions, step })
    }

    /// Grid from an explicit action list; spacing is unknown and reported
    /// as zero.
    pub fn from_actions(actions: Vec<Action>) -> Result<Self> {
        let first = actions.first().ok_or(Error::EmptyGrid)?;
        let dims = first.len();
        if let Some(bad) = actions.iter().find(|a| a.len() != dims) {
            return Err(Error::DimensionMismatch { expected: dims, actual: bad.len() });
        }
        Ok(Self { actions, step: alloc::vec![0.0; dims] })
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn step(&self) -> &[f64] {
        &self.step
    }

    /// `{z ⋄ a : a ∈ grid}` in grid order.
    pub fn compose_with(&self, z: &Context, params: &ProblemParams) -> Result<Vec<PseudoAction>> {
        self.actions.iter().map(|a| params.compose(z, a)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateSource {
    Grid(usize),
    Seed(usize),
}

/// One round's acquisition result.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub chosen: PseudoAction,
    pub source: CandidateSource,
    /// `|xᵀθ̃ − K|` for the chosen pseudo-action.
    pub residual: f64,
    /// Size of the candidate set the argmin ran over.
    pub candidate_count: usize,
    pub chosen_from_seed: bool,
    /// The parameter the argmin used.
    pub theta_tilde: DVector<f64>,
}

/// Index and value of the first minimizer of `|xᵀθ − K|`.
pub fn argmin_residual<'a, I>(candidates: I, theta: &DVector<f64>, target: f64) -> Option<(usize, f64)>
where
    I: IntoIterator<Item = &'a PseudoAction>,
{
    let mut best: Option<(usize, f64)> = None;
    for (i, x) in candidates.into_iter().enumerate() {
        let r = libm::fabs(x.dot(theta) - target);
        match best {
            Some((_, b)) if r >= b => {}
            _ => best = Some((i, r)),
        }
    }
    best
}

/// Argmin over `{certified grid candidates} ∪ seeds` for a given `θ̃`.
///
/// Seeds are admitted as-is; only grid candidates pass through the
/// ellipsoid test at `radius`.
pub fn select_safe_leveler(
    state: &BanditState,
    candidates: &[PseudoAction],
    seeds: &[PseudoAction],
    theta_tilde: DVector<f64>,
    radius: f64,
    params: &ProblemParams,
) -> Result<Decision> {
    if seeds.is_empty() {
        return Err(Error::EmptySeedSet);
    }
    let mut pool: Vec<(CandidateSource, &PseudoAction)> = candidates
        .iter()
        .enumerate()
        .filter(|(_, x)| certify(state, x, radius, params.safe_lower, params.safe_upper).is_safe)
        .map(|(i, x)| (CandidateSource::Grid(i), x))
        .collect();
    pool.extend(seeds.iter().enumerate().map(|(i, x)| (CandidateSource::Seed(i), x)));

    let (k, residual) =
        argmin_residual(pool.iter().map(|(_, x)| *x), &theta_tilde, params.target).expect("seed set is nonempty");
    let (source, chosen) = pool[k];
    Ok(Decision {
        chosen: chosen.clone(),
        source,
        residual,
        candidate_count: pool.len(),
        chosen_from_seed: matches!(source, CandidateSource::Seed(_)),
        theta_tilde,
    })
}

/// Argmin over every candidate for a given `θ̃`, with no safety filter.
pub fn select_leveler(candidates: &[PseudoAction], theta_tilde: DVector<f64>, target: f64) -> Result<Decision> {
    let (k, residual) = argmin_residual(candidates, &theta_tilde, target).ok_or(Error::EmptyGrid)?;
    Ok(Decision {
        chosen: candidates[k].clone(),
        source: CandidateSource::Grid(k),
        residual,
        candidate_count: candidates.len(),
        chosen_from_seed: false,
        theta_tilde,
    })
}

/// One SALE-LTS round over pre-composed candidates `grid ⋄ z`.
pub fn sale_lts_select(
    state: &BanditState,
    candidates: &[PseudoAction],
    seeds: &[PseudoAction],
    t: usize,
    params: &ProblemParams,
    cfg: &PerturbationConfig,
    schedule: &ConfidenceSchedule,
) -> Result<Decision> {
    if seeds.is_empty() {
        return Err(Error::EmptySeedSet);
    }
    let theta_tilde = perturb(state, t, cfg, schedule)?;
    select_safe_leveler(state, candidates, seeds, theta_tilde, schedule.beta(t), params)
}

/// One SALE-LTS round: perturb, filter the grid through the proxy safe set,
/// add the seeds and level against `θ̃`.
#[allow(clippy::too_many_arguments)]
pub fn sale_lts_step(
    state: &BanditState,
    z: &Context,
    seeds: &[PseudoAction],
    grid: &ActionGrid,
    t: usize,
    params: &ProblemParams,
    cfg: &PerturbationConfig,
    schedule: &ConfidenceSchedule,
) -> Result<Decision> {
    let candidates = grid.compose_with(z, params)?;
    sale_lts_select(state, &candidates, seeds, t, params, cfg, schedule)
}

/// One LE-LTS round over pre-composed candidates.
pub fn le_lts_select(
    state: &BanditState,
    candidates: &[PseudoAction],
    t: usize,
    params: &ProblemParams,
    cfg: &PerturbationConfig,
    schedule: &ConfidenceSchedule,
) -> Result<Decision> {
    if candidates.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let theta_tilde = perturb(state, t, cfg, schedule)?;
    select_leveler(candidates, theta_tilde, params.target)
}

/// One LE-LTS round: the SALE-LTS acquisition over the full grid.
pub fn le_lts_step(
    state: &BanditState,
    z: &Context,
    grid: &ActionGrid,
    t: usize,
    params: &ProblemParams,
    cfg: &PerturbationConfig,
    schedule: &ConfidenceSchedule,
) -> Result<Decision> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let candidates = grid.compose_with(z, params)?;
    le_lts_select(state, &candidates, t, params, cfg, schedule)
}

/// Best truly-safe candidate under the hidden parameter.
pub fn oracle_select(
    candidates: &[PseudoAction],
    params: &ProblemParams,
    theta_star: &DVector<f64>,
) -> Result<Decision> {
    let safe: Vec<(usize, &PseudoAction)> = candidates
        .iter()
        .enumerate()
        .filter(|(_, x)| {
            let v = x.dot(theta_star);
            params.safe_lower <= v && v <= params.safe_upper
        })
        .collect();
    let (k, residual) =
        argmin_residual(safe.iter().map(|(_, x)| *x), theta_star, params.target).ok_or(Error::InfeasibleContext)?;
    let (i, chosen) = safe[k];
    Ok(Decision {
        chosen: chosen.clone(),
        source: CandidateSource::Grid(i),
        residual,
        candidate_count: safe.len(),
        chosen_from_seed: false,
        theta_tilde: theta_star.clone(),
    })
}

pub fn oracle_step(
    z: &Context,
    grid: &ActionGrid,
    params: &ProblemParams,
    theta_star: &DVector<f64>,
) -> Result<Decision> {
    let candidates = grid.compose_with(z, params)?;
    oracle_select(&candidates, params, theta_star)
}

/// Argmin of `|xᵀθ − K|` over the seed set only; no exploration.
pub fn seed_only_step(seeds: &[PseudoAction], theta: &DVector<f64>, target: f64) -> Result<Decision> {
    let (k, residual) = argmin_residual(seeds, theta, target).ok_or(Error::EmptySeedSet)?;
    Ok(Decision {
        chosen: seeds[k].clone(),
        source: CandidateSource::Seed(k),
        residual,
        candidate_count: seeds.len(),
        chosen_from_seed: true,
        theta_tilde: theta.clone(),
    })
}

/// The opening round: a uniformly random seed action.
pub fn first_round_step<R: Rng + ?Sized>(
    seeds: &[PseudoAction],
    theta_hat: &DVector<f64>,
    target: f64,
    rng: &mut R,
) -> Result<Decision> {
    if seeds.is_empty() {
        return Err(Error::EmptySeedSet);
    }
    let k = rng.random_range(0..seeds.len());
    Ok(Decision {
        chosen: seeds[k].clone(),
        source: CandidateSource::Seed(k),
        residual: libm::fabs(seeds[k].dot(theta_hat) - target),
        candidate_count: seeds.len(),
        chosen_from_seed: true,
        theta_tilde: theta_hat.clone(),
    })
}

/// Parses a comma-separated policy list such as `sale_lts,le_lts`.
pub fn parse_policy_list(s: &str) -> Result<Vec<PolicyKind>> {
    let list: Vec<PolicyKind> =
        s.split(',').map(str::trim).filter(|p| !p.is_empty()).map(str::parse).collect::<Result<_>>()?;
    if list.is_empty() {
        return Err(Error::Config(String::from("empty policy list")));
    }
    Ok(list)
}
