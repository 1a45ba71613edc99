//! Replicated experiments and their aggregate summary.

use rayon::prelude::*;
use safe_leveling_core::analysis::{bound_report, cumulative_regret, theorem1_bound, BoundReport};
use safe_leveling_core::policy::PolicyKind;
use safe_leveling_core::safety::ConfidenceSchedule;
use safe_leveling_core::sampler::OptimismEstimate;
use safe_leveling_core::simulate::{draw_instance, run_policy, PolicyRun, SimulationConfig};
use safe_leveling_core::Error;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::CliError;

#[derive(Debug, Clone)]
pub enum ReplicationOutcome {
    Completed { replication: usize, runs: Vec<PolicyRun>, rejected_draws: usize, leveler_warnings: usize },
    Aborted { replication: usize, reason: String },
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub replications: Vec<ReplicationOutcome>,
    pub summary: RunSummary,
}

impl Experiment {
    /// Completed runs of one policy, in replication order.
    pub fn runs(&self, policy: PolicyKind) -> impl Iterator<Item = (usize, &PolicyRun)> {
        self.replications.iter().filter_map(move |r| match r {
            ReplicationOutcome::Completed { replication, runs, .. } => {
                runs.iter().find(|run| run.policy == policy).map(|run| (*replication, run))
            }
            ReplicationOutcome::Aborted { .. } => None,
        })
    }

    pub fn all_runs(&self) -> impl Iterator<Item = &PolicyRun> {
        self.replications.iter().flat_map(|r| match r {
            ReplicationOutcome::Completed { runs, .. } => runs.as_slice(),
            ReplicationOutcome::Aborted { .. } => &[],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; 0 with fewer than two values.
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        Self { mean, std }
    }
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub master_seed: u64,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbortedReplication {
    pub replication: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationStats {
    pub replication: usize,
    pub total_regret: f64,
    pub violations: usize,
    pub first_cycle_violations: usize,
    pub seed_fallbacks: usize,
    pub not_e_hat: usize,
    pub not_e_tilde: usize,
    pub not_d: usize,
    pub lemma1_ok: bool,
    pub prop4_lhs: f64,
    pub prop4_rhs: f64,
    pub prop4_ok: bool,
    pub decomposition_ok: bool,
    pub optimism: Option<OptimismEstimate>,
    pub p_used: Option<f64>,
    pub theorem1_value: Option<f64>,
    pub within_theorem1: Option<bool>,
    pub rejected_draws: usize,
    pub leveler_warnings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EventAggregate {
    pub not_e_hat: Stat,
    pub not_e_tilde: Stat,
    pub not_d: Stat,
    /// Fraction of replications where the confidence event failed at least once.
    pub e_hat_failure_rate: f64,
    /// The `δ/4` budget that rate is compared against.
    pub e_hat_budget: f64,
    pub lemma1_ok_all: bool,
    pub prop4_ok_all: bool,
    pub decomposition_ok_all: bool,
    /// Fraction of replications with a regret bound whose regret stayed under it.
    pub theorem1_dominance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySummary {
    pub policy: PolicyKind,
    pub replications: usize,
    pub total_regret: Stat,
    pub violation_count: usize,
    pub violations: Stat,
    pub replications_with_violation: usize,
    pub first_cycle_violation_count: usize,
    pub first_cycle_violations: Stat,
    pub replications_with_first_cycle_violation: usize,
    pub seed_fallback_count: usize,
    pub seed_fallbacks: Stat,
    pub cumulative_regret_mean: Vec<f64>,
    pub cumulative_regret_std: Vec<f64>,
    pub bound_report: BoundReport,
    pub events: EventAggregate,
    pub per_replication: Vec<ReplicationStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub provenance: Provenance,
    pub horizon: usize,
    pub n_replications: usize,
    pub completed_replications: usize,
    pub aborted: Vec<AbortedReplication>,
    pub policies: Vec<PolicySummary>,
}

fn run_replication(
    sim: &SimulationConfig,
    policies: &[PolicyKind],
    master: u64,
    replication: usize,
) -> Result<ReplicationOutcome, CliError> {
    let rep = replication as u64;
    let instance = match draw_instance(sim, master, rep) {
        Ok(i) => i,
        Err(
            e @ (Error::InfeasibleSeed { .. }
            | Error::NoWellPosedInstance(_)
            | Error::EmptyMarginInterval { .. }
            | Error::EmptySeedSet),
        ) => return Ok(ReplicationOutcome::Aborted { replication, reason: e.to_string() }),
        Err(e) => return Err(CliError::runtime(e)),
    };
    let runs = policies
        .iter()
        .map(|&k| run_policy(sim, &instance, k, master, rep).map_err(CliError::runtime))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ReplicationOutcome::Completed {
        replication,
        runs,
        rejected_draws: instance.rejected_draws,
        leveler_warnings: instance.leveler.warnings.len(),
    })
}

/// Runs every replication (in parallel) and aggregates the results.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Experiment, CliError> {
    let sim = cfg.simulation()?;
    let replications = (0..cfg.n_replications)
        .into_par_iter()
        .map(|r| run_replication(&sim, &cfg.policies, cfg.master_seed, r))
        .collect::<Result<Vec<_>, _>>()?;
    let summary = summarize(cfg, &sim, &replications)?;
    Ok(Experiment { config: cfg.clone(), replications, summary })
}

fn replication_stats(
    run: &PolicyRun,
    replication: usize,
    rejected_draws: usize,
    leveler_warnings: usize,
    sim: &SimulationConfig,
    schedule: &ConfidenceSchedule,
    p_override: Option<f64>,
) -> Result<ReplicationStats, CliError> {
    let p_used = p_override.or_else(|| run.optimism.map(|o| o.wilson_lower).filter(|p| *p > 0.0));
    let theorem1_value =
        p_used.map(|p| theorem1_bound(&sim.params, schedule, p)).transpose().map_err(CliError::runtime)?;
    let total = run.total_regret();
    Ok(ReplicationStats {
        replication,
        total_regret: total,
        violations: run.violations,
        first_cycle_violations: run.first_cycle_violations,
        seed_fallbacks: run.seed_fallbacks,
        not_e_hat: run.events.not_e_hat,
        not_e_tilde: run.events.not_e_tilde,
        not_d: run.events.not_d,
        lemma1_ok: run.events.lemma1_ok,
        prop4_lhs: run.prop4.lhs,
        prop4_rhs: run.prop4.rhs,
        prop4_ok: run.prop4.ok,
        decomposition_ok: run.events.decomposition_ok,
        optimism: run.optimism,
        p_used,
        theorem1_value,
        within_theorem1: theorem1_value.map(|b| total <= b),
        rejected_draws,
        leveler_warnings,
    })
}

fn summarize(
    cfg: &ExperimentConfig,
    sim: &SimulationConfig,
    replications: &[ReplicationOutcome],
) -> Result<RunSummary, CliError> {
    let schedule = ConfidenceSchedule::new(&sim.params, sim.sigma);
    let horizon = sim.rounds();
    let aborted: Vec<AbortedReplication> = replications
        .iter()
        .filter_map(|r| match r {
            ReplicationOutcome::Aborted { replication, reason } => {
                Some(AbortedReplication { replication: *replication, reason: reason.clone() })
            }
            ReplicationOutcome::Completed { .. } => None,
        })
        .collect();

    let mut policies = Vec::with_capacity(cfg.policies.len());
    for &policy in &cfg.policies {
        let mut stats = Vec::new();
        let mut curves = Vec::new();
        for r in replications {
            if let ReplicationOutcome::Completed { replication, runs, rejected_draws, leveler_warnings } = r {
                let run = runs.iter().find(|run| run.policy == policy).expect("every policy runs");
                stats.push(replication_stats(
                    run,
                    *replication,
                    *rejected_draws,
                    *leveler_warnings,
                    sim,
                    &schedule,
                    cfg.sampler.p_override,
                )?);
                curves.push(cumulative_regret(&run.logs));
            }
        }
        let (curve_mean, curve_std): (Vec<f64>, Vec<f64>) = (0..horizon)
            .map(|t| {
                let column: Vec<f64> = curves.iter().map(|c| c[t]).collect();
                mean_std(&column)
            })
            .unzip();
        let collect = |f: fn(&ReplicationStats) -> f64| stats.iter().map(f).collect::<Vec<f64>>();
        let count = |f: fn(&ReplicationStats) -> usize| stats.iter().map(f).sum::<usize>();

        // the least optimistic replication gives the most conservative bound
        let p_report = cfg.sampler.p_override.or_else(|| {
            let ps: Option<Vec<f64>> = stats.iter().map(|s| s.p_used).collect();
            ps.filter(|v| !v.is_empty()).map(|v| v.into_iter().fold(1.0, f64::min))
        });
        let bounds = bound_report(&sim.params, &schedule, p_report).map_err(CliError::runtime)?;
        let with_bound: Vec<bool> = stats.iter().filter_map(|s| s.within_theorem1).collect();

        policies.push(PolicySummary {
            policy,
            replications: stats.len(),
            total_regret: Stat::of(&collect(|s| s.total_regret)),
            violation_count: count(|s| s.violations),
            violations: Stat::of(&collect(|s| s.violations as f64)),
            replications_with_violation: stats.iter().filter(|s| s.violations > 0).count(),
            first_cycle_violation_count: count(|s| s.first_cycle_violations),
            first_cycle_violations: Stat::of(&collect(|s| s.first_cycle_violations as f64)),
            replications_with_first_cycle_violation: stats.iter().filter(|s| s.first_cycle_violations > 0).count(),
            seed_fallback_count: count(|s| s.seed_fallbacks),
            seed_fallbacks: Stat::of(&collect(|s| s.seed_fallbacks as f64)),
            cumulative_regret_mean: curve_mean,
            cumulative_regret_std: curve_std,
            bound_report: bounds,
            events: EventAggregate {
                not_e_hat: Stat::of(&collect(|s| s.not_e_hat as f64)),
                not_e_tilde: Stat::of(&collect(|s| s.not_e_tilde as f64)),
                not_d: Stat::of(&collect(|s| s.not_d as f64)),
                e_hat_failure_rate: if stats.is_empty() {
                    0.0
                } else {
                    stats.iter().filter(|s| s.not_e_hat > 0).count() as f64 / stats.len() as f64
                },
                e_hat_budget: sim.params.failure_prob / 4.0,
                lemma1_ok_all: stats.iter().all(|s| s.lemma1_ok),
                prop4_ok_all: stats.iter().all(|s| s.prop4_ok),
                decomposition_ok_all: stats.iter().all(|s| s.decomposition_ok),
                theorem1_dominance: (!with_bound.is_empty())
                    .then(|| with_bound.iter().filter(|b| **b).count() as f64 / with_bound.len() as f64),
            },
            per_replication: stats,
        });
    }

    Ok(RunSummary {
        provenance: Provenance {
            config_hash: cfg.hash(),
            master_seed: cfg.master_seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
        horizon,
        n_replications: cfg.n_replications,
        completed_replications: replications.len() - aborted.len(),
        aborted,
        policies,
    })
}
