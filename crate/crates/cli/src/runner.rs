use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;

use fedigw::envs::Environment;
use fedigw::sim::{run, RunConfig, RunMetrics};
use rayon::prelude::*;

use crate::config::ExperimentConfig;
use crate::error::CliResult;
use crate::output::{epoch_rows, write_epoch_csv, write_step_csv};

/// One `(method, seed)` cell of the grid.
#[derive(Debug, Clone)]
pub struct Job {
    pub run_id: String,
    pub method: String,
    pub seed: u64,
    pub config: RunConfig,
}

pub fn jobs(cfg: &ExperimentConfig) -> Vec<Job> {
    cfg.methods
        .iter()
        .flat_map(|m| {
            cfg.seeds.iter().map(move |&seed| Job {
                run_id: format!("{}-s{seed}", m.name),
                method: m.name.clone(),
                seed,
                config: m.run_config(&cfg.run, seed),
            })
        })
        .collect()
}

/// Outcome of an experiment.
#[derive(Debug, Default)]
pub struct Report {
    pub runs: usize,
    /// `(run_id, error)` of every failed run.
    pub failures: Vec<(String, String)>,
    pub files: Vec<PathBuf>,
}

/// Build every run's environment without running anything.
pub fn dry_run(cfg: &ExperimentConfig) -> CliResult<usize> {
    let jobs = jobs(cfg);
    for job in &jobs {
        job.config.validate()?;
        Environment::build(&job.config.env, job.seed)?;
    }
    Ok(jobs.len())
}

/// Run the grid (in parallel) and write all outputs under `cfg.out_dir`:
/// `manifest.toml`, `runs/<run_id>.csv`, optional `runs/<run_id>_steps.csv`,
/// `summary.csv` and, on failures, `failures.txt`.
pub fn run_experiment(cfg: &ExperimentConfig) -> CliResult<Report> {
    let jobs = jobs(cfg);
    let runs_dir = cfg.out_dir.join("runs");
    fs::create_dir_all(&runs_dir)?;
    let manifest = cfg.out_dir.join("manifest.toml");
    fs::write(&manifest, cfg.manifest()?)?;
    let mut report = Report {
        runs: jobs.len(),
        files: vec![manifest],
        ..Default::default()
    };

    let results: Vec<(&Job, fedigw::Result<RunMetrics>)> = jobs
        .par_iter()
        .map(|job| {
            log::info!("running {}", job.run_id);
            (job, run(&job.config))
        })
        .collect();

    let mut summary = Vec::new();
    for (job, result) in results {
        match result {
            Ok(metrics) => {
                let rows = epoch_rows(&job.run_id, job.seed, &job.method, &metrics);
                let path = runs_dir.join(format!("{}.csv", job.run_id));
                write_epoch_csv(BufWriter::new(File::create(&path)?), &rows)?;
                report.files.push(path);
                if cfg.per_step {
                    let path = runs_dir.join(format!("{}_steps.csv", job.run_id));
                    write_step_csv(BufWriter::new(File::create(&path)?), &job.run_id, &metrics)?;
                    report.files.push(path);
                }
                summary.extend(rows);
            }
            Err(e) => {
                log::error!("{} failed: {e}", job.run_id);
                report.failures.push((job.run_id.clone(), e.to_string()));
            }
        }
    }
    let path = cfg.out_dir.join("summary.csv");
    write_epoch_csv(BufWriter::new(File::create(&path)?), &summary)?;
    report.files.push(path);
    if !report.failures.is_empty() {
        let path = cfg.out_dir.join("failures.txt");
        let text: String = report
            .failures
            .iter()
            .map(|(id, e)| format!("{id}: {e}\n"))
            .collect();
        fs::write(&path, text)?;
        report.files.push(path);
    }
    Ok(report)
}
