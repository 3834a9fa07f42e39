//! Command-line workbench for fractional Laplacian experiments on the unit ball.
//!
//! Each subcommand reads an [`ExperimentConfig`](config::ExperimentConfig), runs one experiment
//! and returns an [`Outcome`](report::Outcome): a versioned JSON report (or CSV table) plus any
//! artifact files. Exit codes are `0` pass, `1` property failure, `2` usage or configuration
//! error, `3` numerical failure.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::{ExperimentConfig, Format};
use error::CliError;
use report::Outcome;

#[derive(Debug, Parser)]
#[command(name = "fracball", version, about = "Fractional Laplacian experiments on the unit ball")]
pub struct Cli {
    /// JSON experiment configuration; defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Directory for the report and artifacts.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// Seed for every randomized component.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Multiply quadrature and collocation resolution by this factor.
    #[arg(long, global = true, value_name = "FACTOR", value_parser = clap::value_parser!(u64).range(1..=16))]
    pub refine: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Check that the explicit singular solution is s-harmonic with a positive boundary trace.
    VerifyNonuniqueness,
    /// Estimate the boundary trace limit of a field, potential or the singular solution.
    Trace,
    /// Tabulate weighted embedding ratios of Green potentials over a boundary-concentrating family.
    EmbeddingTable,
    /// Solve the Dirichlet problem with drift and zero-order terms.
    Solve,
    /// Run the randomized inequality, normalization and mollifier suites.
    Properties,
    /// Evaluate the kernels and constants at one pair of points.
    KernelEval,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::VerifyNonuniqueness => "verify-nonuniqueness",
            Command::Trace => "trace",
            Command::EmbeddingTable => "embedding-table",
            Command::Solve => "solve",
            Command::Properties => "properties",
            Command::KernelEval => "kernel-eval",
        }
    }
}

/// Resolved invocation: the configuration after command-line overrides.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: Command,
    pub config: ExperimentConfig,
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl Invocation {
    pub fn from_cli(cli: &Cli) -> Result<Self, CliError> {
        let mut config = match &cli.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = cli.seed {
            config = config.with_seed(seed);
        }
        if let Some(k) = cli.refine {
            config = config.refined(k as usize);
        }
        let out = cli.out.clone().or_else(|| config.output.dir.clone());
        let format = cli.format.or(config.output.format).unwrap_or_default();
        config.output.format = Some(format);
        Ok(Self { command: cli.command, config, out, format })
    }

    pub fn run(&self) -> Result<Outcome, CliError> {
        let cfg = &self.config;
        match self.command {
            Command::VerifyNonuniqueness => commands::verify::run(cfg),
            Command::Trace => commands::trace::run(cfg),
            Command::EmbeddingTable => commands::embedding::run(cfg),
            Command::Solve => commands::solve::run(cfg),
            Command::Properties => commands::properties::run(cfg),
            Command::KernelEval => commands::kernel::run(cfg),
        }
    }
}

/// Parse-free entry point used by `main`: run, print, write files, and return the exit code.
pub fn execute(cli: &Cli) -> i32 {
    let result = Invocation::from_cli(cli).and_then(|inv| {
        let outcome = inv.run()?;
        if let Some(dir) = &inv.out {
            outcome.write(dir, inv.format)?;
        }
        Ok((outcome, inv.format))
    });
    match result {
        Ok((outcome, format)) => {
            print!("{}", outcome.render(format));
            if outcome.passed {
                error::exit::PASS
            } else {
                error::exit::PROPERTY_FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
