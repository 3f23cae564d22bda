use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gpscale_cli::{commands, run_scenario, Command, Scenario};

#[derive(Parser)]
#[command(name = "gpscale", version, about = "Benchmark Gaussian process approximations")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every repetition, method, tier and task of a scenario.
    Run { config: PathBuf },
    /// Write the simulated dataset of a scenario.
    Simulate { config: PathBuf },
    /// Estimate covariance parameters with the scenario's method.
    Fit { config: PathBuf },
    /// Predict the held-out points with the scenario's method.
    Predict { config: PathBuf },
}

const CONFIG_ERROR: u8 = 1;
const PARTIAL_FAILURE: u8 = 2;

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (path, cmd) = match &cli.command {
        Cmd::Run { config } => (config, Command::Run),
        Cmd::Simulate { config } => (config, Command::Simulate),
        Cmd::Fit { config } => (config, Command::Fit),
        Cmd::Predict { config } => (config, Command::Predict),
    };
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    let scenario = match Scenario::parse_for(&text, path.parent(), cmd) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    let out = match output(scenario.output.as_deref()) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: cannot open output: {e}");
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    let result = match cmd {
        Command::Run => run_scenario(&scenario, out).map(|summary| {
            log::info!("{} records, {} failed, {} skipped", summary.records, summary.failed, summary.skipped);
            summary.failed
        }),
        Command::Simulate => commands::simulate(&scenario, out).map(|_| 0),
        Command::Fit => commands::fit(&scenario, out).map(|_| 0),
        Command::Predict => commands::predict(&scenario, out).map(|_| 0),
    };
    match result {
        Ok(0) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(PARTIAL_FAILURE),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(CONFIG_ERROR)
        }
    }
}
