//! Single-shot pixel↔GPS conversion with every intermediate quantity
//! printed, so a camera setup can be audited against hand calculations.

use clap::Args;
use serde_json::json;

use geomem::camera::{CameraState, PixelOffset, ProjectionError};
use geomem::geodesy::{self, GeoError, GeoPoint};

use crate::error::CmdError;

#[derive(Args)]
pub struct GeolocateArgs {
    /// Camera latitude, degrees.
    #[arg(long)]
    pub lat: f64,
    /// Camera longitude, degrees.
    #[arg(long)]
    pub lon: f64,
    /// Camera height above the ground plane, meters.
    #[arg(long)]
    pub alt_m: f64,
    /// Gimbal pitch below horizontal, degrees (90 = straight down).
    #[arg(long)]
    pub pitch_deg: f64,
    /// Compass heading, degrees clockwise from north.
    #[arg(long, default_value_t = 0.0)]
    pub heading_deg: f64,
    /// Focal length in pixels.
    #[arg(long)]
    pub focal_px: f64,
    /// Image width in pixels.
    #[arg(long, default_value_t = 3840)]
    pub img_w: u32,
    /// Image height in pixels.
    #[arg(long, default_value_t = 2160)]
    pub img_h: u32,
    /// Pixel column to geolocate (image coordinates, origin top-left).
    #[arg(long, requires = "py")]
    pub px: Option<f64>,
    /// Pixel row to geolocate.
    #[arg(long, requires = "px")]
    pub py: Option<f64>,
    /// Latitude of a ground point to project into the image.
    #[arg(long, requires = "target_lon")]
    pub target_lat: Option<f64>,
    /// Longitude of a ground point to project into the image.
    #[arg(long, requires = "target_lat")]
    pub target_lon: Option<f64>,
}

/// Converts a pixel ray to ground coordinates, reporting the intermediate
/// angles and distances; unprojectable rays report a status instead.
fn pixel_report(cam: &CameraState, pixel: PixelOffset) -> Result<serde_json::Value, CmdError> {
    let alpha_deg = geomem::camera::ray_elevation_deg(pixel, cam.focal_px());
    let depression_deg = cam.gimbal_pitch_deg() - alpha_deg;
    let effective_focal_px = cam.focal_px().hypot(pixel.v);
    let mut report = json!({
        "u_px": pixel.u,
        "v_px": pixel.v,
        "alpha_deg": alpha_deg,
        "depression_deg": depression_deg,
        "effective_focal_px": effective_focal_px,
    });
    let entry = report.as_object_mut().expect("object literal");
    match geodesy::pixel_to_gps(cam, pixel) {
        Ok(loc) => {
            entry.insert("status".into(), json!("located"));
            entry.insert("forward_m".into(), json!(loc.ground.y_m));
            entry.insert("right_m".into(), json!(loc.ground.x_m));
            entry.insert("slant_m".into(), json!(loc.slant_m));
            entry.insert("east_m".into(), json!(loc.north.east_m));
            entry.insert("north_m".into(), json!(loc.north.north_m));
            entry.insert("lat".into(), json!(loc.position.lat_deg));
            entry.insert("lon".into(), json!(loc.position.lon_deg));
        }
        Err(GeoError::Projection(ProjectionError::AboveHorizon)) => {
            entry.insert("status".into(), json!("above_horizon"));
        }
        Err(GeoError::Projection(ProjectionError::BehindCamera)) => {
            entry.insert("status".into(), json!("behind_camera"));
        }
        Err(e) => return Err(e.into()),
    }
    Ok(report)
}

/// Projects a GPS ground point into the image, reporting the compass-frame
/// offsets and the resulting pixel.
fn target_report(cam: &CameraState, target: GeoPoint) -> Result<serde_json::Value, CmdError> {
    let offset = geodesy::gps_to_offset(cam.position(), target)?;
    let mut report = json!({
        "east_m": offset.east_m,
        "north_m": offset.north_m,
    });
    let entry = report.as_object_mut().expect("object literal");
    match geodesy::gps_to_pixel(cam, target) {
        Ok(projected) => {
            let (col, row) = cam.image_coords_from_pixel(projected.offset);
            entry.insert("status".into(), json!("projected"));
            entry.insert("u_px".into(), json!(projected.offset.u));
            entry.insert("v_px".into(), json!(projected.offset.v));
            entry.insert("px".into(), json!(col));
            entry.insert("py".into(), json!(row));
            entry.insert("in_frame".into(), json!(projected.in_frame));
        }
        Err(GeoError::Projection(ProjectionError::BehindCamera)) => {
            entry.insert("status".into(), json!("behind_camera"));
        }
        Err(e) => return Err(e.into()),
    }
    Ok(report)
}

pub fn run(args: &GeolocateArgs) -> Result<(), CmdError> {
    let position = GeoPoint::new(args.lat, args.lon);
    let cam = CameraState::new(
        position,
        args.alt_m,
        args.pitch_deg,
        args.heading_deg,
        args.focal_px,
        args.img_w,
        args.img_h,
    )?;

    let mut report = json!({
        "camera": {
            "lat": args.lat,
            "lon": args.lon,
            "alt_m": args.alt_m,
            "pitch_deg": args.pitch_deg,
            "heading_deg": args.heading_deg,
            "focal_px": args.focal_px,
            "img_w": args.img_w,
            "img_h": args.img_h,
        },
        "horizon": {
            "distance_m": cam.horizon_distance_m(),
            "dip_deg": cam.horizon_dip_deg(),
            "row_offset_px": cam.horizon_row_offset(),
        },
    });
    let top = report.as_object_mut().expect("object literal");

    if let (Some(px), Some(py)) = (args.px, args.py) {
        let pixel = cam.pixel_from_image_coords(px, py);
        top.insert("pixel_to_gps".into(), pixel_report(&cam, pixel)?);
    }
    if let (Some(lat), Some(lon)) = (args.target_lat, args.target_lon) {
        let target = GeoPoint::new(lat, lon);
        top.insert("gps_to_pixel".into(), target_report(&cam, target)?);
    }

    super::print_summary(&report);
    Ok(())
}
