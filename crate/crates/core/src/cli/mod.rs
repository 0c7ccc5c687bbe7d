//! Configuration-driven experiment runner behind the `lyhlab` binary.

pub mod config;
pub mod run;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{ExperimentConfig, ModelSpec, Suites, SweepSpec, Tolerances};
pub use run::{describe, run, sweep, Axis, RunOutcome, SweepOutcome, SCHEMA_VERSION};

use crate::error::Result;

#[derive(Debug, Parser)]
#[command(name = "lyhlab", version, about = "Matrix Li-Yau-Hamilton estimates on model Kähler manifolds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evolve the configured pair and run the enabled suites.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run only this suite (positivity, identities, sharpness, conservation).
        #[arg(long)]
        suite: Option<String>,
    },
    /// One run per value of a sweep axis, with a combined summary.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        axis: Axis,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        suite: Option<String>,
    },
    /// Print the resolved plan without computing anything.
    Describe {
        #[arg(long)]
        config: PathBuf,
    },
}

fn load(path: &PathBuf, suite: Option<&str>) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_path(path)?;
    if let Some(name) = suite {
        config.suites = Suites::only(name)?;
    }
    Ok(config)
}

fn print_failures<'a>(failures: impl IntoIterator<Item = &'a run::Failure>) {
    for f in failures {
        eprintln!(
            "  {} {} (epsilon {}): node {} at t = {}: {:.6e}",
            f.suite, f.quantity, f.epsilon, f.node, f.t, f.value
        );
    }
}

/// Runs a parsed command and returns the process exit code.
pub fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run { config, out, suite } => {
            let config = load(&config, suite.as_deref())?;
            let out = out.unwrap_or_else(|| config.output.clone());
            let outcome = run(&config, &out)?;
            for o in &outcome.outcomes {
                for s in &o.suites {
                    println!("epsilon {}: {} {}", o.epsilon, s.suite, if s.passed { "pass" } else { "FAIL" });
                }
            }
            println!("artifacts in {}", out.display());
            if outcome.passed() {
                Ok(0)
            } else {
                eprintln!("violations (first 10):");
                print_failures(outcome.failures(10));
                Ok(1)
            }
        }
        Command::Sweep { config, axis, out, suite } => {
            let config = load(&config, suite.as_deref())?;
            let out = out.unwrap_or_else(|| config.output.clone());
            let outcome = sweep(&config, axis, &out)?;
            for (label, o) in &outcome.points {
                println!("{} = {label}: {}", axis.name(), if o.passed() { "pass" } else { "FAIL" });
            }
            println!("summary in {}", out.join("summary.csv").display());
            if outcome.passed() {
                Ok(0)
            } else {
                eprintln!("violations (first 10):");
                print_failures(outcome.points.iter().flat_map(|(_, o)| o.failures(10)).take(10));
                Ok(1)
            }
        }
        Command::Describe { config } => {
            let config = ExperimentConfig::from_path(&config)?;
            print!("{}", describe(&config)?);
            Ok(0)
        }
    }
}
