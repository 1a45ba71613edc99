//! CSV and JSON artifacts of a run.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use safe_leveling_core::analysis::cumulative_regret;

use crate::experiment::{Experiment, ReplicationOutcome, RunSummary};
use crate::snapshot::StateSnapshot;

use crate::error::CliError;

pub const ROUNDS_HEADER: [&str; 13] = [
    "replication",
    "policy",
    "t",
    "context_id",
    "cycle",
    "regret",
    "cum_regret",
    "violation",
    "from_seed",
    "d_event",
    "e_hat_event",
    "e_tilde_event",
    "weighted_norm",
];

pub const CURVE_HEADER: [&str; 4] = ["policy", "t", "mean_cum_regret", "std_cum_regret"];

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

pub fn write_rounds(replications: &[ReplicationOutcome], path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(ROUNDS_HEADER)?;
    for r in replications {
        let ReplicationOutcome::Completed { replication, runs, .. } = r else { continue };
        for run in runs {
            let cum = cumulative_regret(&run.logs);
            for (log, c) in run.logs.iter().zip(cum) {
                w.write_record([
                    replication.to_string().as_str(),
                    run.policy.name(),
                    &log.t.to_string(),
                    &log.context_id.to_string(),
                    &log.cycle.to_string(),
                    &log.regret.to_string(),
                    &c.to_string(),
                    flag(log.violation),
                    flag(log.from_seed),
                    flag(log.d_event),
                    flag(log.e_hat),
                    flag(log.e_tilde),
                    &log.weighted_norm.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_regret_curve(summary: &RunSummary, path: &Path) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CURVE_HEADER)?;
    for p in &summary.policies {
        if p.replications == 0 {
            continue;
        }
        for (i, (m, s)) in p.cumulative_regret_mean.iter().zip(&p.cumulative_regret_std).enumerate() {
            w.write_record([p.policy.name(), &(i + 1).to_string(), &m.to_string(), &s.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(summary: &RunSummary, path: &Path) -> Result<(), CliError> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, summary)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

/// Final learner state of every run under `snapshots/`.
pub fn write_snapshots(replications: &[ReplicationOutcome], dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    for r in replications {
        let ReplicationOutcome::Completed { replication, runs, .. } = r else { continue };
        for run in runs {
            let path = dir.join(format!("{}_rep{replication}.json", run.policy.name()));
            let text = serde_json::to_string(&StateSnapshot::of(&run.final_state))?;
            fs::write(path, text + "\n")?;
        }
    }
    Ok(())
}

/// Writes `rounds.csv`, `summary.json`, `regret_curve.csv` and the state
/// snapshots into `dir`, creating it if needed.
pub fn emit_reports(experiment: &Experiment, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    write_rounds(&experiment.replications, &dir.join("rounds.csv"))?;
    write_summary(&experiment.summary, &dir.join("summary.json"))?;
    write_regret_curve(&experiment.summary, &dir.join("regret_curve.csv"))?;
    write_snapshots(&experiment.replications, &dir.join("snapshots"))?;
    Ok(())
}
