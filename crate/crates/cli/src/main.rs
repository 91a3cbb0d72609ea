use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use pleijel_cli::{commands, exit_code, ChecksFailed};

/// Nodal-domain and Weyl-law experiments for Schrödinger operators.
#[derive(Parser)]
#[command(name = "pleijel", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the dimensional constants as JSON.
    Constants {
        #[arg(long)]
        dim: usize,
    },
    /// Build and audit the localisation cover.
    Partition {
        #[arg(long)]
        config: PathBuf,
    },
    /// Compute eigenvalues and save eigenfunctions.
    Spectrum {
        #[arg(long)]
        config: PathBuf,
    },
    /// Label nodal domains and audit their localisation.
    Nodal {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the full ratio experiment.
    Pleijel {
        #[arg(long)]
        config: PathBuf,
        /// Also write an SVG scatter plot.
        #[arg(long)]
        svg: bool,
    },
    /// Run the invariant suite.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
}

fn configure_threads() -> Result<()> {
    if let Ok(value) = std::env::var("PLEIJEL_THREADS") {
        let threads: usize = value.trim().parse().map_err(|_| pleijel_cli::config::config_error(format!("PLEIJEL_THREADS must be a positive integer, got {value:?}")))?;
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().context("configuring the thread pool")?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<String> {
    configure_threads()?;
    match cli.command {
        Command::Constants { dim } => commands::constants(dim),
        Command::Partition { config } => commands::partition(&commands::load(&config)?),
        Command::Spectrum { config } => commands::spectrum(&commands::load(&config)?),
        Command::Nodal { config } => commands::nodal(&commands::load(&config)?),
        Command::Pleijel { config, svg } => commands::pleijel(&commands::load(&config)?, svg),
        Command::Verify { config } => commands::verify(&commands::load(&config)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            if let Some(failed) = err.downcast_ref::<ChecksFailed>() {
                println!("{}", failed.0);
            } else {
                eprintln!("error: {err:#}");
            }
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
