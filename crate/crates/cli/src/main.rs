mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;
use crate::output::{ensure_dir, write_atomic};

#[derive(Parser)]
#[command(
    name = "corrsens",
    version,
    about = "Sensitivity indices for models with correlated inputs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sensitivity analysis described by a JSON problem file.
    Analyze {
        config: PathBuf,
        /// Output directory, overriding `output.directory`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print original- and normal-space correlation matrices of a problem.
    Nataf { config: PathBuf },
    /// Recompute one of the reference tables and compare.
    Reproduce {
        #[arg(value_parser = ["table1", "table2", "table3"])]
        table: String,
        #[arg(long, default_value_t = 10_000)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Directory for `<table>_comparison.csv`.
        #[arg(long, default_value = "corrsens-output")]
        out: PathBuf,
    },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var("CORRSENS_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| {
            CliError::config(
                "CORRSENS_THREADS",
                format!("expected a positive integer, got {value:?}"),
            )
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Numerical(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Analyze { config, out } => {
            let report = commands::analyze(&config, out)?;
            print!("{}", report.to_csv());
        }
        Command::Nataf { config } => print!("{}", commands::nataf_report(&config)?),
        Command::Reproduce {
            table,
            n,
            seed,
            out,
        } => {
            let r = commands::reproduce(&table, n, seed)?;
            ensure_dir(&out)?;
            let path = out.join(format!("{table}_comparison.csv"));
            write_atomic(&path, &r.csv)?;
            print!("{}", r.csv);
            for f in &r.failures {
                eprintln!("FAIL {f}");
            }
            eprintln!(
                "{table}: {} of {} checks within tolerance; wrote {}",
                r.checks - r.failures.len(),
                r.checks,
                path.display()
            );
            if !r.failures.is_empty() {
                return Err(CliError::ChecksFailed(r.failures.len()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
