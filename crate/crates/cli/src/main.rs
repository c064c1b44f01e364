use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::{ContextKind, ContextValue, ErrorKind as ClapKind};
use clap::{Parser, Subcommand};
use episim_cli::artifacts::Stage;
use episim_cli::config::{load, Overrides};
use episim_cli::error::{CliError, CliResult};
use episim_cli::synth;

#[derive(Debug, Parser)]
#[command(name = "episim", version, about = "Trend-change forecasts from count signals driving SEIR scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for training and simulation runs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Forecast horizon in days.
    #[arg(long, global = true)]
    horizon: Option<usize>,
    /// Monte Carlo runs per setting.
    #[arg(long, global = true)]
    runs: Option<usize>,
    /// Trend smoothing window in days (odd).
    #[arg(long, global = true)]
    window: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Collect auxiliary count series.
    Fetch,
    /// Build trend inputs for every setting.
    Transform,
    /// Train one ensemble per setting.
    Train,
    /// Forecast and detect trend changes.
    Predict,
    /// Fit per-location R over the calibration period.
    Calibrate,
    /// Run SEIR scenarios for baselines and predicted settings.
    Simulate,
    /// Score settings against observed cases.
    Evaluate,
    /// All stages in order.
    Pipeline,
    /// Write a synthetic dataset and configuration into --out (--seed picks
    /// the dataset).
    Synth,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Pipeline => "pipeline",
            Command::Synth => "synth",
            other => other.stages()[0].name(),
        }
    }

    fn stages(self) -> Vec<Stage> {
        match self {
            Command::Fetch => vec![Stage::Fetch],
            Command::Transform => vec![Stage::Transform],
            Command::Train => vec![Stage::Train],
            Command::Predict => vec![Stage::Predict],
            Command::Calibrate => vec![Stage::Calibrate],
            Command::Simulate => vec![Stage::Simulate],
            Command::Evaluate => vec![Stage::Evaluate],
            Command::Pipeline => Stage::ALL.to_vec(),
            Command::Synth => Vec::new(),
        }
    }
}

fn usage_error(e: &clap::Error) -> CliError {
    let mut err = CliError::config(e.kind().to_string());
    if let Some(ContextValue::String(arg)) = e.get(ContextKind::InvalidArg) {
        // "--window <WINDOW>" -> "--window"
        let flag = arg.split_whitespace().next().unwrap_or(arg);
        err = err.with_field(flag);
        if let Some(ContextValue::String(v)) = e.get(ContextKind::InvalidValue) {
            err.message = format!("invalid value {v:?} for {flag}");
        }
    }
    err
}

fn execute(cli: Cli) -> CliResult<()> {
    if let Command::Synth = cli.command {
        let dir = cli.out.ok_or_else(|| CliError::config_field("--out", "synth needs --out"))?;
        synth::write_bundle(&dir, cli.seed.unwrap_or(100), 2021)?;
        return Ok(());
    }
    let path = cli
        .config
        .clone()
        .ok_or_else(|| CliError::config_field("--config", "a configuration file is required"))?;
    let overrides = Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        horizon: cli.horizon,
        runs: cli.runs,
        window: cli.window,
    };
    let resolved = load(&path, &overrides)?;
    episim_cli::run(cli.command.name(), &cli.command.stages(), &resolved, cli.jobs)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ClapKind::DisplayHelp | ClapKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = usage_error(&e);
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
