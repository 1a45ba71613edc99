//! JSON experiment configuration.

use std::fs;
use std::path::Path;

use safe_leveling_core::environment::{default_seed_margin, ContextBox, NoiseModel};
use safe_leveling_core::policy::{ActionGrid, PolicyKind};
use safe_leveling_core::simulate::{ScheduleMode, SimulationConfig};
use safe_leveling_core::{Context, ProblemParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub noise: NoiseModel,
    pub context_box: ContextBox,
    /// Defaults to a tenth of the safe band.
    #[serde(default)]
    pub seed_margin: Option<f64>,
    #[serde(default = "one")]
    pub seed_set_size: usize,
    /// Fixed hidden parameter. Drawn per replication when absent.
    #[serde(default)]
    pub theta_star: Option<Vec<f64>>,
    /// Fixed contexts for round-robin mode. Drawn per replication when absent.
    #[serde(default)]
    pub meal_schedule: Option<Vec<Vec<f64>>>,
    #[serde(default = "default_instance_draws")]
    pub max_instance_draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default = "default_points")]
    pub points_per_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    /// Optimism probability for the regret bound; estimated when absent.
    #[serde(default)]
    pub p_override: Option<f64>,
    #[serde(default = "default_optimism_samples")]
    pub optimism_samples: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { sigma: default_sigma(), p_override: None, optimism_samples: default_optimism_samples() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemParams,
    pub environment: EnvironmentConfig,
    #[serde(default = "default_policies")]
    pub policies: Vec<PolicyKind>,
    pub grid: GridConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default = "default_meal_events")]
    pub n_meal_events: usize,
    #[serde(default = "default_cycles")]
    pub n_cycles: usize,
    #[serde(default = "one")]
    pub n_replications: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub schedule: ScheduleMode,
    #[serde(default)]
    pub shuffle_contexts: bool,
}

fn one() -> usize {
    1
}
fn default_points() -> usize {
    201
}
fn default_sigma() -> f64 {
    1.0
}
fn default_optimism_samples() -> usize {
    2000
}
fn default_instance_draws() -> usize {
    10_000
}
fn default_meal_events() -> usize {
    30
}
fn default_cycles() -> usize {
    15
}
fn default_policies() -> Vec<PolicyKind> {
    PolicyKind::ALL.to_vec()
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// The default desk experiment.
    pub fn desk() -> Self {
        let sim = safe_leveling_core::simulate::desk_config();
        Self {
            problem: sim.params,
            environment: EnvironmentConfig {
                noise: sim.noise,
                context_box: sim.context_box,
                seed_margin: None,
                seed_set_size: sim.seed_set_size,
                theta_star: None,
                meal_schedule: None,
                max_instance_draws: sim.max_instance_draws,
            },
            policies: default_policies(),
            grid: GridConfig { lower: vec![0.0], upper: vec![0.7], points_per_dim: default_points() },
            sampler: SamplerConfig::default(),
            n_meal_events: sim.n_meal_events,
            n_cycles: sim.n_cycles,
            n_replications: 1,
            master_seed: 0,
            output_dir: None,
            schedule: ScheduleMode::RoundRobin,
            shuffle_contexts: false,
        }
    }

    /// Checks every invariant and builds the per-replication simulation
    /// setup.
    pub fn simulation(&self) -> Result<SimulationConfig, CliError> {
        if self.policies.is_empty() {
            return Err(CliError::Config("policies must name at least one policy".into()));
        }
        if self.n_replications == 0 {
            return Err(CliError::Config("n_replications must be at least 1".into()));
        }
        if let Some(p) = self.sampler.p_override {
            if !(p > 0.0 && p <= 1.0) {
                return Err(CliError::Config("p_override must lie in (0, 1]".into()));
            }
        }
        let grid = ActionGrid::uniform(&self.grid.lower, &self.grid.upper, self.grid.points_per_dim)?;
        let meal_schedule = self
            .environment
            .meal_schedule
            .as_ref()
            .map(|list| list.iter().map(|z| Context::new(z.clone())).collect::<Result<Vec<_>, _>>())
            .transpose()?;
        let sim = SimulationConfig {
            params: self.problem.clone(),
            grid,
            noise: self.environment.noise,
            context_box: self.environment.context_box.clone(),
            seed_margin: self.environment.seed_margin.unwrap_or_else(|| default_seed_margin(&self.problem)),
            seed_set_size: self.environment.seed_set_size,
            theta_star: self.environment.theta_star.clone(),
            meal_schedule,
            n_meal_events: self.n_meal_events,
            n_cycles: self.n_cycles,
            schedule: self.schedule,
            shuffle_contexts: self.shuffle_contexts,
            sigma: self.sampler.sigma,
            optimism_samples: self.sampler.optimism_samples,
            max_instance_draws: self.environment.max_instance_draws,
        };
        sim.validate()?;
        Ok(sim)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}
