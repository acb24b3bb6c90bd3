mod config;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use config::ExperimentConfig;

/// Exit status for an experiment that ran but missed its acceptance check.
const EXIT_MISS: u8 = 1;
/// Exit status for configuration, solver and I/O errors.
const EXIT_ERROR: u8 = 2;

#[derive(Parser)]
#[command(name = "irk-spectral", version, about = "Run implicit Runge-Kutta spectral experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Directory for the CSV and JSON artifacts.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Worker threads for independent step sizes (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Cross-check every step against the direct update form.
        #[arg(long)]
        debug_checks: bool,
    },
}

fn run(config: &Path, out: &Path, threads: Option<usize>, debug_checks: bool) -> anyhow::Result<bool> {
    if let Some(n) = threads {
        anyhow::ensure!(n > 0, "--threads must be at least 1");
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let source = config.display().to_string();
    let text = std::fs::read_to_string(config).with_context(|| format!("reading {source}"))?;
    let mut cfg = ExperimentConfig::parse(&text, &source)?;
    if debug_checks {
        cfg.debug_checks = Some(true);
    }
    let base = config.parent().unwrap_or(Path::new("."));
    let resolved = cfg.resolve(&text, &source, base)?;
    let outcome = run::execute(&resolved)?;
    let summary = run::write_artifacts(&resolved, &outcome, out)?;
    println!(
        "{} {} [{}]",
        if outcome.pass { "PASS" } else { "FAIL" },
        outcome.verdict,
        summary.display()
    );
    Ok(outcome.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Command::Run {
        config,
        out,
        threads,
        debug_checks,
    } = cli.command;
    match run(&config, &out, threads, debug_checks) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_MISS),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
