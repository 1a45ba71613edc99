//! One replication of the online protocol: draw a well-posed instance, then
//! run a policy over the context schedule, updating the estimator after
//! every outcome.

use alloc::string::ToString;
use alloc::vec::Vec;

use nalgebra::DVector;
use rand::seq::SliceRandom;

use crate::analysis::{d_event_threshold, event_monitor, prop4_check, EventSummary, Prop4Check, RoundLog};
use crate::environment::{draw_in_ball, ContextBox, EnvironmentSpec, LevelerReport, NoiseModel};
use crate::error::{Error, Result};
use crate::estimator::BanditState;
use crate::model::{validate_params, Context, ProblemParams, PseudoAction};
use crate::policy::{
    first_round_step, le_lts_select, oracle_select, sale_lts_select, seed_only_step, ActionGrid, Decision, PolicyKind,
};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::safety::ConfidenceSchedule;
use crate::sampler::{estimate_optimism_p, OptimismEstimate, PerturbationConfig};

/// How contexts are sequenced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum ScheduleMode {
    /// A fixed set of contexts, each revisited once per cycle.
    #[default]
    RoundRobin,
    /// A fresh context every round.
    Iid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub params: ProblemParams,
    pub grid: ActionGrid,
    pub noise: NoiseModel,
    pub context_box: ContextBox,
    pub seed_margin: f64,
    pub seed_set_size: usize,
    /// Fixed hidden parameter; drawn per replication when absent.
    pub theta_star: Option<Vec<f64>>,
    /// Fixed contexts; drawn per replication when absent.
    pub meal_schedule: Option<Vec<Context>>,
    pub n_meal_events: usize,
    pub n_cycles: usize,
    pub schedule: ScheduleMode,
    /// Permute the context order inside each cycle.
    pub shuffle_contexts: bool,
    /// Scale of the Thompson perturbation.
    pub sigma: f64,
    /// Monte Carlo draws for the end-of-run optimism estimate; 0 skips it.
    pub optimism_samples: usize,
    /// Attempts at drawing a well-posed instance before giving up.
    pub max_instance_draws: usize,
}

impl SimulationConfig {
    /// Rounds in one replication.
    pub fn rounds(&self) -> usize {
        match self.schedule {
            ScheduleMode::RoundRobin => self.n_meal_events * self.n_cycles,
            ScheduleMode::Iid => self.params.horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        validate_params(p)?;
        if self.schedule == ScheduleMode::RoundRobin {
            if self.n_meal_events == 0 || self.n_cycles == 0 {
                return Err(Error::Config("n_meal_events and n_cycles must be at least 1".into()));
            }
            if self.rounds() != p.horizon {
                return Err(Error::Config(alloc::format!(
                    "horizon {} must equal n_meal_events × n_cycles = {}",
                    p.horizon,
                    self.rounds()
                )));
            }
        }
        if let Some(a) = self.grid.actions().first() {
            if a.len() != p.action_dim {
                return Err(Error::DimensionMismatch { expected: p.action_dim, actual: a.len() });
            }
        }
        self.context_box.validate()?;
        if self.context_box.dim() != p.context_dim {
            return Err(Error::DimensionMismatch { expected: p.context_dim, actual: self.context_box.dim() });
        }
        if self.noise.scale() > p.noise_scale || !self.noise.scale().is_finite() || self.noise.scale() < 0.0 {
            return Err(Error::Config("environment noise scale must lie in [0, noise_scale]".into()));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config("sigma must be positive".into()));
        }
        if self.seed_set_size == 0 {
            return Err(Error::EmptySeedSet);
        }
        if self.seed_margin.is_nan()
            || self.seed_margin < 0.0
            || p.safe_lower + self.seed_margin > p.safe_upper - self.seed_margin
        {
            return Err(Error::EmptyMarginInterval {
                lower: p.safe_lower + self.seed_margin,
                upper: p.safe_upper - self.seed_margin,
            });
        }
        if self.max_instance_draws == 0 {
            return Err(Error::Config("max_instance_draws must be at least 1".into()));
        }
        if let Some(theta) = &self.theta_star {
            EnvironmentSpec::new(
                DVector::from_column_slice(theta),
                self.noise,
                self.context_box.clone(),
                self.seed_margin,
                p,
            )?;
        }
        // every composed pseudo-action must respect ‖x‖ ≤ L
        let action_sq =
            self.grid.actions().iter().map(|a| a.values().iter().map(|v| v * v).sum::<f64>()).fold(0.0, f64::max);
        let context_sq = match &self.meal_schedule {
            Some(list) => {
                if self.schedule == ScheduleMode::RoundRobin && list.len() != self.n_meal_events {
                    return Err(Error::Config("meal_schedule length must equal n_meal_events".into()));
                }
                if self.schedule == ScheduleMode::Iid {
                    return Err(Error::Config("meal_schedule requires round_robin scheduling".into()));
                }
                if let Some(z) = list.iter().find(|z| z.len() != p.context_dim) {
                    return Err(Error::DimensionMismatch { expected: p.context_dim, actual: z.len() });
                }
                list.iter().map(|z| z.values().iter().map(|v| v * v).sum::<f64>()).fold(0.0, f64::max)
            }
            None => self.context_box.max_abs().iter().map(|v| v * v).sum(),
        };
        let norm = libm::sqrt(action_sq + context_sq);
        if norm > p.action_norm_bound {
            return Err(Error::NormBound { norm, bound: p.action_norm_bound });
        }
        Ok(())
    }
}

/// A drawn problem instance with everything a policy needs precomputed.
#[derive(Debug, Clone)]
pub struct Instance {
    pub env: EnvironmentSpec,
    pub contexts: Vec<Context>,
    /// `grid ⋄ z` per context, in grid order.
    pub candidates: Vec<Vec<PseudoAction>>,
    pub seeds: Vec<Vec<PseudoAction>>,
    /// `(context_id, cycle)` per round.
    pub order: Vec<(usize, usize)>,
    pub leveler: LevelerReport,
    /// Draws rejected before this one was accepted.
    pub rejected_draws: usize,
}

/// Cheap check of seed feasibility and leveler gaps, run before the full
/// instance is built.
fn passes_screen(cfg: &SimulationConfig, theta: &DVector<f64>, contexts: &[Context]) -> bool {
    let p = &cfg.params;
    let (w_z, w_a) = theta.as_slice().split_at(p.context_dim);
    let resolution: f64 = w_a.iter().zip(cfg.grid.step()).map(|(w, h)| libm::fabs(*w) * h / 2.0).sum();
    let (lo, hi) = (p.safe_lower + cfg.seed_margin, p.safe_upper - cfg.seed_margin);
    contexts.iter().all(|z| {
        let base: f64 = z.values().iter().zip(w_z).map(|(a, b)| a * b).sum();
        let mut seeds = 0;
        let mut gap = f64::INFINITY;
        for a in cfg.grid.actions() {
            let v = base + a.values().iter().zip(w_a).map(|(a, b)| a * b).sum::<f64>();
            seeds += usize::from(lo <= v && v <= hi);
            gap = gap.min(libm::fabs(v - p.target));
        }
        // loose tolerance: the exact check runs afterwards
        seeds >= cfg.seed_set_size && gap <= resolution + 1e-9
    })
}

/// Environment, per-context candidates, per-context seeds and leveler report.
type Built = (EnvironmentSpec, Vec<Vec<PseudoAction>>, Vec<Vec<PseudoAction>>, LevelerReport);

fn try_instance(cfg: &SimulationConfig, theta: DVector<f64>, contexts: Vec<Context>) -> Result<Built> {
    let p = &cfg.params;
    let env = EnvironmentSpec::new(theta, cfg.noise, cfg.context_box.clone(), cfg.seed_margin, p)?
        .with_schedule(contexts.clone());
    let candidates = contexts.iter().map(|z| cfg.grid.compose_with(z, p)).collect::<Result<Vec<_>>>()?;
    let seeds =
        contexts.iter().map(|z| env.gen_seed_set(z, &cfg.grid, p, cfg.seed_set_size)).collect::<Result<Vec<_>>>()?;
    let leveler = env.check_assumption3(&contexts, &cfg.grid, p)?;
    Ok((env, candidates, seeds, leveler))
}

/// Draws the hidden parameter and contexts for one replication, retrying
/// until every context has a feasible seed set and a grid leveler within
/// the grid's resolution. A fixed parameter and schedule get one attempt,
/// and a leveler warning is then reported rather than rejected.
pub fn draw_instance(cfg: &SimulationConfig, master: u64, replication: u64) -> Result<Instance> {
    let p = &cfg.params;
    let mut rng = stream_rng(master, replication, Stream::Environment);
    let n_contexts = match cfg.schedule {
        ScheduleMode::RoundRobin => cfg.n_meal_events,
        ScheduleMode::Iid => p.horizon,
    };
    let fixed = cfg.theta_star.is_some() && cfg.meal_schedule.is_some();
    let attempts = if fixed { 1 } else { cfg.max_instance_draws };

    for attempt in 0..attempts {
        let theta = match &cfg.theta_star {
            Some(v) => DVector::from_column_slice(v),
            None => draw_in_ball(p.dim(), p.theta_norm_bound, &mut rng),
        };
        let contexts = match &cfg.meal_schedule {
            Some(list) => list.clone(),
            None => (0..n_contexts).map(|_| cfg.context_box.sample(&mut rng)).collect(),
        };
        if !fixed && !passes_screen(cfg, &theta, &contexts) {
            continue;
        }
        match try_instance(cfg, theta, contexts.clone()) {
            Ok((env, candidates, seeds, leveler)) if fixed || leveler.is_clean() => {
                let order = schedule_order(cfg, n_contexts, master, replication);
                return Ok(Instance { env, contexts, candidates, seeds, order, leveler, rejected_draws: attempt });
            }
            Err(e) if fixed => return Err(e),
            Ok(_) | Err(Error::InfeasibleSeed { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Err(Error::NoWellPosedInstance(attempts))
}

fn schedule_order(cfg: &SimulationConfig, n_contexts: usize, master: u64, replication: u64) -> Vec<(usize, usize)> {
    match cfg.schedule {
        ScheduleMode::Iid => (0..n_contexts).map(|k| (k, 0)).collect(),
        ScheduleMode::RoundRobin => {
            let mut rng = stream_rng(master, replication, Stream::Schedule);
            let mut order = Vec::with_capacity(n_contexts * cfg.n_cycles);
            let mut ids: Vec<usize> = (0..n_contexts).collect();
            for cycle in 0..cfg.n_cycles {
                if cfg.shuffle_contexts {
                    ids.shuffle(&mut rng);
                }
                order.extend(ids.iter().map(|&k| (k, cycle)));
            }
            order
        }
    }
}

/// Everything one policy produced on one replication.
#[derive(Debug, Clone)]
pub struct PolicyRun {
    pub policy: PolicyKind,
    pub logs: Vec<RoundLog>,
    pub final_state: BanditState,
    pub events: EventSummary,
    pub prop4: Prop4Check,
    pub violations: usize,
    /// Violations during the first pass over the contexts.
    pub first_cycle_violations: usize,
    pub seed_fallbacks: usize,
    pub optimism: Option<OptimismEstimate>,
}

impl PolicyRun {
    pub fn total_regret(&self) -> f64 {
        self.logs.iter().map(|l| l.regret).sum()
    }
}

/// Runs `policy` over the instance's schedule.
pub fn run_policy(
    cfg: &SimulationConfig,
    instance: &Instance,
    policy: PolicyKind,
    master: u64,
    replication: u64,
) -> Result<PolicyRun> {
    let p = &cfg.params;
    let schedule = ConfidenceSchedule::new(p, cfg.sigma);
    let threshold = d_event_threshold(p, &schedule);
    let perturbation = PerturbationConfig {
        sigma: cfg.sigma,
        rng_seed: derive_seed(master, replication, Stream::Perturbation),
        p_estimate: None,
    };
    let mut noise_rng = stream_rng(master, replication, Stream::Noise);
    let mut first_rng = stream_rng(master, replication, Stream::FirstRound);
    let theta_star = instance.env.theta_star();

    let mut state = BanditState::new(p);
    let mut logs = Vec::with_capacity(instance.order.len());
    for (i, &(k, cycle)) in instance.order.iter().enumerate() {
        let t = i + 1;
        let cands = &instance.candidates[k];
        let seeds = &instance.seeds[k];
        let decision: Decision = match policy {
            PolicyKind::SaleLts if t == 1 => first_round_step(seeds, state.theta_hat(), p.target, &mut first_rng)?,
            PolicyKind::SaleLts => sale_lts_select(&state, cands, seeds, t, p, &perturbation, &schedule)?,
            PolicyKind::LeLts => le_lts_select(&state, cands, t, p, &perturbation, &schedule)?,
            PolicyKind::Oracle => oracle_select(cands, p, theta_star)?,
            PolicyKind::SeedOnly => seed_only_step(seeds, state.theta_hat(), p.target)?,
        };

        let x = &decision.chosen;
        let mean = x.dot(theta_star);
        let outcome = instance.env.emit_outcome(x, &mut noise_rng);
        let theta_hat = state.theta_hat();
        let max_norm = cands.iter().map(|c| state.weighted_norm(c)).fold(0.0, f64::max);
        logs.push(RoundLog {
            t,
            context_id: k,
            cycle,
            context: instance.contexts[k].values().to_vec(),
            chosen: x.values().to_vec(),
            outcome,
            regret: libm::fabs(mean - p.target),
            violation: !(p.safe_lower <= mean && mean <= p.safe_upper),
            weighted_norm: state.weighted_norm(x),
            e_hat: state.design_norm(&(theta_hat - theta_star)) <= schedule.beta(t),
            e_tilde: state.design_norm(&(&decision.theta_tilde - theta_hat)) <= schedule.gamma(t),
            d_event: max_norm < threshold,
            r1: libm::fabs(x.dot(&(theta_star - &decision.theta_tilde))),
            r2: libm::fabs(x.dot(&decision.theta_tilde) - p.target),
            from_seed: decision.chosen_from_seed,
        });
        state.update(x, outcome)?;
    }

    let optimism = if policy == PolicyKind::SaleLts && cfg.optimism_samples > 0 {
        let first = instance.order.first().map(|o| o.0).ok_or(Error::Config("empty schedule".to_string()))?;
        let opt_cfg = PerturbationConfig {
            sigma: cfg.sigma,
            rng_seed: derive_seed(master, replication, Stream::Optimism),
            p_estimate: None,
        };
        Some(estimate_optimism_p(
            &state,
            &instance.candidates[first],
            p.horizon,
            &opt_cfg,
            p,
            &schedule,
            cfg.optimism_samples,
        )?)
    } else {
        None
    };

    let first_pass = match cfg.schedule {
        ScheduleMode::RoundRobin => instance.contexts.len(),
        ScheduleMode::Iid => logs.len(),
    };
    Ok(PolicyRun {
        policy,
        events: event_monitor(&logs, p, &schedule),
        prop4: prop4_check(&logs, p),
        violations: logs.iter().filter(|l| l.violation).count(),
        first_cycle_violations: logs.iter().take(first_pass).filter(|l| l.violation).count(),
        seed_fallbacks: logs.iter().filter(|l| l.from_seed).count(),
        logs,
        final_state: state,
        optimism,
    })
}

/// The reference desk problem: two context features in `[0, 0.5]`, one
/// scalar action in `[0, 0.7]`, target off the middle of the safe band.
pub fn desk_config() -> SimulationConfig {
    let params = ProblemParams {
        context_dim: 2,
        action_dim: 1,
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
    };
    SimulationConfig {
        seed_margin: 0.1 * (params.safe_upper - params.safe_lower),
        params,
        grid: ActionGrid::uniform(&[0.0], &[0.7], 201).expect("static grid"),
        noise: NoiseModel::Gaussian { scale: 0.1 },
        context_box: ContextBox { lower: alloc::vec![0.0, 0.0], upper: alloc::vec![0.5, 0.5] },
        seed_set_size: 1,
        theta_star: None,
        meal_schedule: None,
        n_meal_events: 30,
        n_cycles: 15,
        schedule: ScheduleMode::RoundRobin,
        shuffle_contexts: false,
        sigma: 1.0,
        optimism_samples: 2000,
        max_instance_draws: 10_000,
    }
}
