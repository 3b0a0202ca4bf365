use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fedigw_cli::{dry_run, parse_config, run_experiment, CliError, CliResult};

#[derive(Parser)]
#[command(name = "fedigw", version, about = "Federated contextual bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (method, seed) cell of an experiment config.
    Run(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    /// Experiment config (TOML).
    config: PathBuf,
    /// Output directory (overrides `out_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-step CSVs.
    #[arg(long)]
    per_step: bool,
    /// Comma-separated seeds (overrides `seeds`).
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Run only this method.
    #[arg(long)]
    method: Option<String>,
    /// Parse and dry-run the config; write nothing.
    #[arg(long, conflicts_with_all = ["out", "per_step"])]
    validate: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn execute(args: RunArgs) -> CliResult<i32> {
    let mut cfg = parse_config(&args.config)?;
    cfg.restrict(args.seeds, args.method.as_deref())?;
    if let Some(out) = args.out {
        cfg.out_dir = out;
    }
    cfg.per_step |= args.per_step;
    if args.validate {
        let n = dry_run(&cfg)?;
        println!("config ok: {n} runs");
        return Ok(0);
    }
    if let Some(t) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let report = run_experiment(&cfg)?;
    println!(
        "{} runs, {} failed; outputs in {}",
        report.runs,
        report.failures.len(),
        cfg.out_dir.display()
    );
    for (id, e) in &report.failures {
        eprintln!("FAILED {id}: {e}");
    }
    Ok(if report.failures.is_empty() { 0 } else { 1 })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run(args) => execute(args).unwrap_or_else(|e| {
            eprintln!("error: {e}");
            e.exit_code()
        }),
    };
    ExitCode::from(code as u8)
}
