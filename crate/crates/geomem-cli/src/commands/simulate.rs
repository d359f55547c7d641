//! Render a scenario description into the file streams the other commands
//! consume: per-UAV telemetry, detections and ground truth, plus pooled
//! size-calibration samples.

use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use geomem::io;
use geomem::sim::{self, Scenario};

use crate::error::CmdError;
use crate::Globals;

#[derive(Args)]
pub struct SimulateArgs {
    /// Scenario description JSON.
    #[arg(long, value_name = "FILE")]
    pub scenario: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
}

pub fn run(args: &SimulateArgs, globals: &Globals) -> Result<(), CmdError> {
    let text =
        std::fs::read_to_string(&args.scenario).map_err(|e| CmdError::io_at(&args.scenario, e))?;
    let mut scenario: Scenario = serde_json::from_str(&text).map_err(|e| {
        CmdError::Validation(format!("{}: {e}", args.scenario.display()))
    })?;
    if let Some(seed) = globals.seed {
        scenario.seed = seed;
    }

    let result = sim::run(&scenario)?;

    std::fs::create_dir_all(&args.out_dir).map_err(|e| CmdError::io_at(&args.out_dir, e))?;
    let mut files = Vec::new();
    for (i, uav) in result.uavs.iter().enumerate() {
        let telemetry = args.out_dir.join(format!("uav{i}_telemetry.jsonl"));
        let detections = args.out_dir.join(format!("uav{i}_detections.jsonl"));
        let gt = args.out_dir.join(format!("uav{i}_gt.jsonl"));
        io::write_jsonl(&telemetry, &uav.telemetry)?;
        io::write_jsonl(&detections, &uav.detections)?;
        io::write_jsonl(&gt, &uav.gt)?;
        for path in [telemetry, detections, gt] {
            files.push(path.display().to_string());
        }
    }
    let sizes = args.out_dir.join("sizes.csv");
    io::write_size_csv(&sizes, &result.sizes)?;
    files.push(sizes.display().to_string());

    super::print_summary(&json!({
        "seed": scenario.seed,
        "frames": scenario.frames,
        "uavs": scenario.uavs.len(),
        "objects": scenario.objects.len(),
        "size_samples": result.sizes.len(),
        "files": files,
    }));
    Ok(())
}
