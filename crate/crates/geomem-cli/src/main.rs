//! `geomem`: a deterministic command-line harness around the geomem library.
//!
//! Subcommands cover the full workflow: auditing single geolocations,
//! simulating multi-UAV scenarios, running the detection-boosting pipeline,
//! tracking, anomaly aggregation, cooperative fusion of several streams,
//! size-model fitting, metric evaluation, map inspection, and throughput
//! benchmarks. Every subcommand is single-threaded and bit-reproducible:
//! identical inputs and seed produce byte-identical outputs.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use error::CmdError;
use geomem::config::Config;

#[derive(Parser)]
#[command(
    name = "geomem",
    version,
    about = "UAV geolocation, temporal memory maps, tracking, fusion and anomaly tools"
)]
struct Cli {
    /// JSON configuration file; built-in defaults apply when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Seed overriding the command's default (and a scenario's own seed).
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Log filter: off, error, warn, info, debug or trace.
    #[arg(long, global = true, value_name = "LEVEL")]
    log_level: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert between pixels and GPS for one camera pose, printing every
    /// intermediate quantity.
    Geolocate(commands::geolocate::GeolocateArgs),
    /// Render a scenario file into telemetry, detection and ground-truth
    /// streams plus size-calibration samples.
    Simulate(commands::simulate::SimulateArgs),
    /// Run the detection-boosting pipeline over one stream.
    Vod(commands::vod::VodArgs),
    /// Run the pipeline and associate detections into tracks.
    Track(commands::track::TrackArgs),
    /// Aggregate per-frame heatmaps into a georeferenced anomaly map.
    Anomaly(commands::anomaly::AnomalyArgs),
    /// Run several streams cooperatively against fused memory and a shared
    /// tracker.
    Fuse(commands::fuse::FuseArgs),
    /// Fit the distance-vs-size model from calibration samples.
    FitSizeModel(commands::fit_size_model::FitSizeModelArgs),
    /// Score predictions against ground truth.
    Eval(commands::eval::EvalArgs),
    /// Export a serialized map as CSV or GeoJSON.
    DumpMap(commands::dump_map::DumpMapArgs),
    /// Measure pipeline and heatmap-projection throughput.
    Bench(commands::bench::BenchArgs),
}

/// Configuration plus global flags, resolved once for all subcommands.
pub struct Globals {
    pub config: Config,
    pub seed: Option<u64>,
}

fn load_globals(cli: &Cli) -> Result<Globals, CmdError> {
    let config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CmdError::io_at(path, e))?;
            Config::from_json(&text)?
        }
        None => Config::default(),
    };
    Ok(Globals { config, seed: cli.seed })
}

fn init_logging(level: Option<&str>) {
    let mut builder = env_logger::Builder::from_default_env();
    if let Some(level) = level {
        builder.parse_filters(level);
    }
    // A second init (e.g. under tests) is harmless.
    let _ = builder.format_timestamp(None).try_init();
}

fn dispatch(cli: Cli) -> Result<(), CmdError> {
    let globals = load_globals(&cli)?;
    match cli.command {
        Command::Geolocate(args) => commands::geolocate::run(&args),
        Command::Simulate(args) => commands::simulate::run(&args, &globals),
        Command::Vod(args) => commands::vod::run(&args, &globals),
        Command::Track(args) => commands::track::run(&args, &globals),
        Command::Anomaly(args) => commands::anomaly::run(&args, &globals),
        Command::Fuse(args) => commands::fuse::run(&args, &globals),
        Command::FitSizeModel(args) => commands::fit_size_model::run(&args, &globals),
        Command::Eval(args) => commands::eval::run(&args, &globals),
        Command::DumpMap(args) => commands::dump_map::run(&args),
        Command::Bench(args) => commands::bench::run(&args, &globals),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e)
            if e.kind() == ErrorKind::DisplayHelp
                || e.kind() == ErrorKind::DisplayVersion
                || e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand =>
        {
            // Help and version requests are successes, not errors.
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CmdError::Validation(e.to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    init_logging(cli.log_level.as_deref());
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
