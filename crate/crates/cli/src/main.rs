use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use safe_leveling::{emit_reports, run_experiment, CliError, ExperimentConfig};
use safe_leveling_core::analysis::bound_report;
use safe_leveling_core::policy::parse_policy_list;
use safe_leveling_core::safety::ConfidenceSchedule;

#[derive(Parser)]
#[command(name = "safe-leveling", version, about = "Safe leveling linear-bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment and write its reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; falls back to `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `master_seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated policy names, e.g. `sale_lts,le_lts`.
        #[arg(long)]
        policies: Option<String>,
        #[arg(long)]
        replications: Option<usize>,
    },
    /// Check a config file without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the theoretical bounds for a config without simulating.
    Bounds {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, out, seed, policies, replications } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.master_seed = s;
            }
            if let Some(list) = policies {
                cfg.policies = parse_policy_list(&list)?;
            }
            if let Some(n) = replications {
                cfg.n_replications = n;
            }
            let out = out
                .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
                .ok_or_else(|| CliError::Config("no output directory: pass --out or set output_dir".into()))?;
            let experiment = run_experiment(&cfg)?;
            emit_reports(&experiment, &out)?;
            let s = &experiment.summary;
            println!(
                "{} of {} replications completed, T = {}, reports in {}",
                s.completed_replications,
                s.n_replications,
                s.horizon,
                out.display()
            );
            for p in &s.policies {
                println!(
                    "{:<10} regret {:.4} ± {:.4}  violations {}  first-cycle {}  seed fallbacks {}",
                    p.policy.name(),
                    p.total_regret.mean,
                    p.total_regret.std,
                    p.violation_count,
                    p.first_cycle_violation_count,
                    p.seed_fallback_count
                );
            }
            if s.completed_replications == 0 {
                return Err(CliError::Runtime("every replication was aborted".into()));
            }
            Ok(())
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let sim = cfg.simulation()?;
            println!(
                "ok: d = {}, T = {}, {} grid actions, {} replications, policies {}",
                sim.params.dim(),
                sim.rounds(),
                sim.grid.len(),
                cfg.n_replications,
                cfg.policies.iter().map(|p| p.name()).collect::<Vec<_>>().join(",")
            );
            Ok(())
        }
        Command::Bounds { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let sim = cfg.simulation()?;
            let schedule = ConfidenceSchedule::new(&sim.params, sim.sigma);
            let report = bound_report(&sim.params, &schedule, cfg.sampler.p_override)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
