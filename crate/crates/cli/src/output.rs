//! CSV outputs. Floats use Rust's shortest round-trip formatting.

use std::io::Write;

use fedigw::sim::RunMetrics;

use crate::error::CliResult;

pub const EPOCH_HEADER: [&str; 10] = [
    "run_id",
    "seed",
    "method",
    "epoch",
    "gamma",
    "comm_rounds",
    "scalars_up",
    "fl_loss",
    "cum_regret",
    "avg_reward",
];

pub const STEP_HEADER: [&str; 10] = [
    "run_id", "t", "agent", "t_local", "epoch", "action", "reward", "regret", "cum_regret", "avg_reward",
];

pub fn epoch_rows(run_id: &str, seed: u64, method: &str, metrics: &RunMetrics) -> Vec<[String; 10]> {
    metrics
        .epochs
        .iter()
        .map(|e| {
            [
                run_id.to_string(),
                seed.to_string(),
                method.to_string(),
                e.epoch.to_string(),
                e.gamma.to_string(),
                e.comm.rounds.to_string(),
                e.comm.scalars_up.to_string(),
                e.fl_loss.map(|v| v.to_string()).unwrap_or_default(),
                e.cum_regret.to_string(),
                e.avg_reward.to_string(),
            ]
        })
        .collect()
}

pub fn write_epoch_csv<W: Write>(out: W, rows: &[[String; 10]]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(EPOCH_HEADER)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_step_csv<W: Write>(out: W, run_id: &str, metrics: &RunMetrics) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STEP_HEADER)?;
    let cum = metrics.cumulative_regret();
    let avg = metrics.moving_average_reward();
    for ((s, c), a) in metrics.steps.iter().zip(&cum).zip(&avg) {
        w.write_record([
            run_id.to_string(),
            s.t.to_string(),
            s.agent.to_string(),
            s.t_local.to_string(),
            s.epoch.to_string(),
            s.action.to_string(),
            s.reward.to_string(),
            s.regret.to_string(),
            c.to_string(),
            a.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
