//! `cqad`: plot-ready data for the qubit–acoustic-cavity toolkit.

mod commands;
mod output;

use clap::{CommandFactory, Parser, Subcommand};
use commands::{CliError, RunContext};
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(
    name = "cqad",
    version,
    about = "Superconducting qubit coupled to a multimode SAW cavity"
)]
struct Cli {
    #[command(subcommand)]
    command: Option<Command>,

    /// TOML configuration for the subcommand; defaults describe the measured device.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(
        long,
        global = true,
        env = "CQAD_OUTPUT_DIR",
        default_value = "cqad-out"
    )]
    out: PathBuf,

    /// Seed for any synthetic noise.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Resonant qubit–mode evolution per mode (engine, exact and approximate).
    Evolve,
    /// Dispersive and AC Stark shifts per mode.
    Stark,
    /// Purcell-corrected qubit decay per mode and at the idle point.
    Purcell,
    /// Fit a CSV time series with a named model.
    Fit,
    /// Cavity geometry from time-of-flight intervals.
    Tof,
    /// Echo train at the output transducer.
    Echo,
    /// Reset time against reset-mode coupling.
    ResetSweep,
    /// Damping regime of each mode.
    Regimes,
    /// Run the acceptance checks.
    Selftest,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Evolve => "evolve",
            Command::Stark => "stark",
            Command::Purcell => "purcell",
            Command::Fit => "fit",
            Command::Tof => "tof",
            Command::Echo => "echo",
            Command::ResetSweep => "reset-sweep",
            Command::Regimes => "regimes",
            Command::Selftest => "selftest",
        }
    }
}

#[derive(Serialize)]
struct RunManifest {
    subcommand: String,
    config_path: String,
    output_dir: String,
    seed: u64,
    tool_version: String,
    wall_time: f64,
    exit_code: i32,
    error: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let Some(command) = cli.command else {
        let _ = Cli::command().print_help();
        return ExitCode::from(1);
    };

    let start = Instant::now();
    let ctx = RunContext {
        config: cli.config.clone(),
        out: cli.out.clone(),
        seed: cli.seed,
    };
    let result = match command {
        Command::Evolve => commands::evolve(&ctx),
        Command::Stark => commands::stark(&ctx),
        Command::Purcell => commands::purcell(&ctx),
        Command::Fit => commands::fit(&ctx),
        Command::Tof => commands::tof(&ctx),
        Command::Echo => commands::echo(&ctx),
        Command::ResetSweep => commands::reset_sweep(&ctx),
        Command::Regimes => commands::regimes(&ctx),
        Command::Selftest => commands::selftest(&ctx),
    };
    let code = result.as_ref().err().map_or(0, CliError::exit_code);
    if let Err(e) = &result {
        eprintln!("cqad {}: {e}", command.name());
    }

    let manifest = RunManifest {
        subcommand: command.name().into(),
        config_path: cli
            .config
            .map(|p| p.display().to_string())
            .unwrap_or_default(),
        output_dir: cli.out.display().to_string(),
        seed: cli.seed,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        wall_time: start.elapsed().as_secs_f64(),
        exit_code: code,
        error: result.err().map(|e| e.to_string()),
    };
    if let Err(e) = output::write_json(&cli.out.join("manifest.json"), &manifest) {
        eprintln!("cqad: could not write run manifest: {e:#}");
        return ExitCode::from(2);
    }
    ExitCode::from(code as u8)
}
