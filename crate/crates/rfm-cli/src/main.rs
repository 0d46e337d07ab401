//! `rfm`: random factor models from the command line.
//!
//! Subcommands: `ingest`, `gen-data`, `experiment`, `validate-theory`, `pca`,
//! `project`. All outputs are CSV. Exit codes: 0 success (and all theory rows
//! passing), 1 validation failure, 2 usage/config error, 3 I/O error.

mod commands;
mod config;
mod error;
mod panel_io;

use clap::{Parser, Subcommand, ValueEnum};
use commands::GenDataArgs;
use panel_io::IngestMode;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "rfm",
    version,
    about = "Random factor models: covariance-preserving random projections, a PCA baseline, ensemble experiments, and Monte Carlo validation of the closed-form moment laws"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Prices,
    Returns,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a CSV of prices or returns into a standardized panel file
    Ingest {
        /// Input CSV: header row of series ids, first column ISO-8601 dates
        #[arg(long)]
        input: PathBuf,
        /// Output panel file
        #[arg(long)]
        output: PathBuf,
        /// Whether rows hold prices (log-returns are taken) or returns
        #[arg(long, value_enum)]
        mode: ModeArg,
    },
    /// Generate a standardized synthetic panel
    GenData {
        /// iid_gaussian, one_factor, or multi_factor
        #[arg(long)]
        kind: String,
        /// Observations per series
        #[arg(long)]
        d: usize,
        /// Number of series
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        beta_min: f64,
        #[arg(long, default_value_t = 1.5)]
        beta_max: f64,
        #[arg(long, default_value_t = 1.0)]
        noise_scale: f64,
        /// Factor count for multi_factor panels
        #[arg(long, default_value_t = 3)]
        factors: usize,
        #[arg(long)]
        output: PathBuf,
    },
    /// Run funnel experiments described by a config file
    Experiment {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's base seed
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (1 guarantees bit-reproducible output; outputs are
        /// deterministic for any fixed value)
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Validate the closed-form moment laws by Monte Carlo
    ValidateTheory {
        /// Config file; without it, defaults to gaussian d=100 k=10 with
        /// 100000 trials
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Decompose a panel with the PCA baseline
    Pca {
        #[arg(long)]
        panel: PathBuf,
        /// Also write rank-k factors and loadings
        #[arg(long)]
        k: Option<usize>,
        /// Also write the market-factor-reduced panel
        #[arg(long)]
        remove_market: bool,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Apply one realized random factor model to a panel
    Project {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long)]
        family: String,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<u8, error::CliError> {
    match cli.command {
        Command::Ingest {
            input,
            output,
            mode,
        } => {
            let mode = match mode {
                ModeArg::Prices => IngestMode::Prices,
                ModeArg::Returns => IngestMode::Returns,
            };
            commands::cmd_ingest(&input, &output, mode)?;
            Ok(0)
        }
        Command::GenData {
            kind,
            d,
            n,
            seed,
            beta_min,
            beta_max,
            noise_scale,
            factors,
            output,
        } => {
            commands::cmd_gen_data(&GenDataArgs {
                kind,
                d,
                n,
                seed,
                beta_min,
                beta_max,
                noise_scale,
                factors,
                output,
            })?;
            Ok(0)
        }
        Command::Experiment {
            config,
            seed,
            workers,
            out,
        } => {
            commands::cmd_experiment(&config, seed, workers, &out)?;
            Ok(0)
        }
        Command::ValidateTheory {
            config,
            seed,
            workers,
            out,
        } => {
            let passed = commands::cmd_validate_theory(config.as_deref(), seed, workers, &out)?;
            if passed {
                Ok(0)
            } else {
                eprintln!("validation error: one or more theory rows FAILED");
                Ok(1)
            }
        }
        Command::Pca {
            panel,
            k,
            remove_market,
            out,
        } => {
            commands::cmd_pca(&panel, k, remove_market, &out)?;
            Ok(0)
        }
        Command::Project {
            panel,
            family,
            k,
            seed,
            out,
        } => {
            commands::cmd_project(&panel, &family, k, seed, &out)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.exit_code())
        }
    }
}
