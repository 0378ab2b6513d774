use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use cuspwave_cli::{commands, CliError, Outcome, RunConfig};

#[derive(Parser)]
#[command(name = "cuspwave", version, about = "Perturbed double-cusp evolution and diagnostics")]
struct Cli {
    /// Output directory; CUSPWAVE_OUT takes precedence.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the grid spacing of the config.
    #[arg(long, global = true)]
    dx_override: Option<f64>,
    /// Seed for randomized sweeps.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads for concurrent runs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve a config and write the time-series CSV.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Check the closed-form background against the field equations.
    VerifyBackground {
        #[arg(long, default_value_t = 5)]
        sets: usize,
        #[arg(long, default_value_t = 1000)]
        points: usize,
    },
    /// Evolve and fit the decay of the weighted norm.
    DecayReport {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evolve with constraint-solved `a` and report constraint residuals.
    ConstraintReport {
        #[arg(long)]
        config: PathBuf,
    },
    /// Observed convergence orders over successive refinements.
    Convergence {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evolve an isometry image of the background and measure its drift.
    IsometryCheck {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &Path, dx: Option<f64>) -> anyhow::Result<RunConfig> {
    let cfg = RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?;
    Ok(match dx {
        Some(dx) => cfg.with_dx(dx)?,
        None => cfg,
    })
}

fn execute(cli: Cli) -> anyhow::Result<Outcome> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let out = std::env::var_os("CUSPWAVE_OUT")
        .map(PathBuf::from)
        .or(cli.out)
        .unwrap_or_else(|| PathBuf::from("."));
    let dx = cli.dx_override;
    let outcome = match cli.command {
        Command::Run { config } => commands::run(&load(&config, dx)?, &out)?,
        Command::VerifyBackground { sets, points } => commands::verify_background(cli.seed, sets, points, &out)?,
        Command::DecayReport { config } => commands::decay_report(&load(&config, dx)?, &out)?,
        Command::ConstraintReport { config } => commands::constraint_report(&load(&config, dx)?, &out)?,
        Command::Convergence { config } => commands::convergence(&load(&config, dx)?, &out)?,
        Command::IsometryCheck { config } => commands::isometry_check(&load(&config, dx)?, &out)?,
    };
    Ok(outcome)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(o) => {
            println!("{}: {}", if o.pass { "PASS" } else { "FAIL" }, o.summary);
            ExitCode::from(if o.pass { 0 } else { 4 })
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<CliError>().map_or(1, CliError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
