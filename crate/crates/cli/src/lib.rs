//! Command-line front end: panel files, JSON reports and the `fit`,
//! `simulate`, `mc` and `baselines` commands.

pub mod commands;
pub mod error;
pub mod panel;
pub mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use commands::{baselines_command, fit_command, mc_command, simulate_command, FitCommand, McCommand};
use error::{CliError, CliResult};
use panel::Layout;

/// Seed used when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 20240607;

#[derive(Debug, Parser)]
#[command(name = "ordlatent", version, about = "Latent correlation between two blocks of ordinal variables")]
pub struct Cli {
    /// Seed for every random draw (multi-start, bootstrap, simulation).
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Maximum number of worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct LayoutArgs {
    /// Number of X-block columns (needed when the header has no X:/Y: prefixes).
    #[arg(long)]
    pub px: Option<usize>,
    /// Number of Y-block columns.
    #[arg(long)]
    pub py: Option<usize>,
    /// Number of categories; defaults to the largest code in the file.
    #[arg(long)]
    pub q: Option<usize>,
}

impl LayoutArgs {
    fn layout(&self) -> Layout {
        Layout {
            p_x: self.px,
            p_y: self.py,
            q: self.q,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the model to a panel and write a JSON report.
    Fit {
        /// Panel CSV: one row per observation, integer category codes from 1.
        input: PathBuf,
        #[command(flatten)]
        layout: LayoutArgs,
        /// Parametric bootstrap replicates for bias and BCa intervals (0 = none).
        #[arg(long, default_value_t = 0)]
        bootstrap: usize,
        /// Write the latent score series to this CSV file.
        #[arg(long)]
        scores_out: Option<PathBuf>,
        /// Estimate separate thresholds for every variable.
        #[arg(long)]
        per_variable_thresholds: bool,
        /// Confidence level of the intervals.
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Number of optimizer starts.
        #[arg(long, default_value_t = 3)]
        starts: usize,
        /// Report path (standard output when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample a panel from a built-in scenario.
    Simulate {
        /// Threshold design: S1 (skewed) or S2 (symmetric).
        #[arg(long, default_value = "S1")]
        scenario: String,
        /// True latent correlation.
        #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
        rho: f64,
        /// Number of observations.
        #[arg(long, default_value_t = 30)]
        n: usize,
        /// Panel path (standard output when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo study of a built-in scenario.
    Mc {
        /// Threshold design: S1 (skewed) or S2 (symmetric).
        #[arg(long, default_value = "S1")]
        scenario: String,
        /// True latent correlation.
        #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
        rho: f64,
        /// Number of replicates.
        #[arg(long, default_value_t = 500)]
        reps: usize,
        /// Sample size per replicate (scenario default 30).
        #[arg(long)]
        n: Option<usize>,
        /// Nominal level of the Fisher intervals.
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        /// Output directory for replicates.csv, boxplot.csv and summary.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Polychoric and canonical correlations for a panel or one table.
    Baselines {
        /// Panel CSV, or a contingency table with --table.
        input: PathBuf,
        #[command(flatten)]
        layout: LayoutArgs,
        /// Read the input as a headerless CSV contingency table.
        #[arg(long)]
        table: bool,
        /// Report path (standard output when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Runs one command; `Ok(false)` means outputs were written but the
/// computation did not converge.
pub fn run(cli: &Cli) -> CliResult<bool> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Input("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(t);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Input(format!("cannot start worker threads: {e}")))?;
    pool.install(|| dispatch(cli))
}

fn dispatch(cli: &Cli) -> CliResult<bool> {
    let seed = cli.seed;
    match &cli.command {
        Command::Fit {
            input,
            layout,
            bootstrap,
            scores_out,
            per_variable_thresholds,
            level,
            starts,
            out,
        } => fit_command(&FitCommand {
            input,
            layout: layout.layout(),
            shared_thresholds: !per_variable_thresholds,
            bootstrap: *bootstrap,
            level: *level,
            starts: *starts,
            seed,
            out: out.as_deref(),
            scores_out: scores_out.as_deref(),
        }),
        Command::Simulate { scenario, rho, n, out } => {
            simulate_command(scenario, *rho, *n, seed, out.as_deref()).map(|()| true)
        }
        Command::Mc {
            scenario,
            rho,
            reps,
            n,
            level,
            out,
        } => mc_command(&McCommand {
            scenario,
            rho: *rho,
            reps: *reps,
            n: *n,
            level: *level,
            seed,
            out,
        }),
        Command::Baselines { input, layout, table, out } => {
            baselines_command(input, &layout.layout(), *table, seed, out.as_deref()).map(|()| true)
        }
    }
}
