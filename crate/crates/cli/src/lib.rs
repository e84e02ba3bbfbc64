//! `ajsim`: configuration-driven experiment runner for `ajsim-core`.
//!
//! ```text
//! ajsim <task> --config path.toml [--set k=v]... [--out dir] [--threads n] [--seed s]
//! ```
//!
//! Exit status is 0 on success, 2 when the configuration is rejected and 3
//! when a run aborts.

pub mod config;
pub mod error;
pub mod output;
pub mod report;
pub mod tasks;

use std::path::PathBuf;

use clap::{Parser, ValueEnum};

use crate::config::{ExperimentConfig, Task};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Check a configuration and print the regime report; never simulates.
    Validate,
    Simulate,
    Moments,
    Occupancy,
    Asymptotics,
    Lemma22,
    Converge,
    Bond,
    Barrier,
}

impl Command {
    pub fn task(self) -> Option<Task> {
        Some(match self {
            Command::Validate => return None,
            Command::Simulate => Task::Simulate,
            Command::Moments => Task::Moments,
            Command::Occupancy => Task::Occupancy,
            Command::Asymptotics => Task::Asymptotics,
            Command::Lemma22 => Task::Lemma22,
            Command::Converge => Task::Converge,
            Command::Bond => Task::Bond,
            Command::Barrier => Task::Barrier,
        })
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ajsim",
    version,
    about = "Euler-Maruyama experiments for the Ait-Sahalia rate model with jumps"
)]
pub struct Cli {
    pub command: Command,

    #[arg(long, short = 'c', value_name = "PATH")]
    pub config: PathBuf,

    /// Override a config value, e.g. `--set model.sigma=0.4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,

    /// Output directory, overriding `output.dir`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Worker threads; the rayon default when absent.
    #[arg(long, env = "AJSIM_THREADS")]
    pub threads: Option<usize>,

    /// Seed, overriding `ensemble.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Loads the config named on the command line with every override applied.
pub fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&cli.config, &cli.set)?;
    if let Some(seed) = cli.seed {
        cfg.ensemble.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if let Some(task) = cli.command.task() {
        cfg.task = Some(task);
    }
    Ok(cfg)
}

/// Runs one invocation, writing human output to `stdout` and logs to `stderr`.
pub fn run(
    cli: &Cli,
    stdout: &mut dyn std::io::Write,
    stderr: &mut dyn std::io::Write,
) -> Result<()> {
    let cfg = load_config(cli)?;
    let Some(task) = cli.command.task() else {
        let report = report::validate(&cfg)?;
        stdout.write_all(report.render().as_bytes())?;
        return Ok(());
    };
    cfg.validate(task)?;
    if cli.threads == Some(0) {
        return Err(CliError::config("--threads", "must be at least 1"));
    }
    let started_at = output::now();
    let mut log = Vec::new();
    let out = match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Runtime(format!("cannot start thread pool: {e}")))?
            .install(|| tasks::run_task(&cfg, task, &mut log))?,
        None => tasks::run_task(&cfg, task, &mut log)?,
    };
    for line in &log {
        writeln!(stderr, "{line}")?;
    }
    let written =
        output::write_artifacts(&cfg.output.dir, &cfg, task, &out, cli.threads, started_at)?;
    for p in written {
        writeln!(stdout, "wrote {}", p.display())?;
    }
    Ok(())
}
