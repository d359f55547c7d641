//! Fit the per-class distance-vs-pixel-size model from calibration samples.

use std::path::PathBuf;

use clap::Args;
use serde_json::json;

use geomem::io;
use geomem::size_filter::SizeModel;

use crate::error::CmdError;
use crate::Globals;

#[derive(Args)]
pub struct FitSizeModelArgs {
    /// Calibration samples CSV (class_id, distance_m, diameter_px).
    #[arg(long, value_name = "FILE")]
    pub sizes: PathBuf,
    /// Where to write the fitted model JSON.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

pub fn run(args: &FitSizeModelArgs, globals: &Globals) -> Result<(), CmdError> {
    let points = io::read_size_csv(&args.sizes)?;
    let model = SizeModel::fit(&points, globals.config.size_filter.clone())?;
    std::fs::write(&args.out, model.to_json()).map_err(|e| CmdError::io_at(&args.out, e))?;

    super::print_summary(&json!({
        "points": points.len(),
        "classes": model.class_ids().collect::<Vec<_>>(),
        "out": args.out.display().to_string(),
    }));
    Ok(())
}
