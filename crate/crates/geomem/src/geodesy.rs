//! WGS-84 point arithmetic and full pixel↔GPS compositions.
//!
//! Camera-frame ground offsets (`x` right of heading, `y` along heading) are
//! rotated into compass-aligned east/north offsets, then converted to GPS
//! degrees on a locally flat earth whose radius is the geocentric WGS-84
//! radius at the UAV's latitude. All conversions here are exact algebraic
//! inverses of each other, so round trips are lossless up to float error.

use crate::camera::{CameraState, GroundOffset, PixelOffset, ProjectedPixel, ProjectionError};
use std::fmt;

/// WGS-84 semi-major axis (equatorial radius) in meters.
pub const WGS84_SEMI_MAJOR_M: f64 = 6_378_137.0;
/// WGS-84 semi-minor axis (polar radius) in meters.
pub const WGS84_SEMI_MINOR_M: f64 = 6_356_752.314;

/// Latitude (degrees) beyond which longitude scaling is considered
/// ill-conditioned and offset conversions refuse to run.
pub const POLE_PROXIMITY_LAT_DEG: f64 = 89.9;

/// A WGS-84 position in degrees.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GeoPoint {
    pub lat_deg: f64,
    pub lon_deg: f64,
}

impl GeoPoint {
    pub fn new(lat_deg: f64, lon_deg: f64) -> Self {
        GeoPoint { lat_deg, lon_deg }
    }
}

/// A metric offset in the compass frame: east and north of some origin.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NorthOffset {
    pub east_m: f64,
    pub north_m: f64,
}

impl NorthOffset {
    pub fn new(east_m: f64, north_m: f64) -> Self {
        NorthOffset { east_m, north_m }
    }

    /// Euclidean length of the offset in meters.
    pub fn norm_m(&self) -> f64 {
        self.east_m.hypot(self.north_m)
    }
}

/// Errors from geodetic conversions and their camera compositions.
#[derive(Debug, Clone, PartialEq)]
pub enum GeoError {
    /// A pixel/ground projection failed; see the wrapped error.
    Projection(ProjectionError),
    /// The origin latitude is too close to a pole for longitude scaling.
    PoleProximity { lat_deg: f64 },
}

impl fmt::Display for GeoError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeoError::Projection(e) => write!(f, "projection failed: {e}"),
            GeoError::PoleProximity { lat_deg } => write!(
                f,
                "latitude {lat_deg:.4}° is within {:.1}° of a pole; longitude scaling is ill-conditioned",
                90.0 - POLE_PROXIMITY_LAT_DEG
            ),
        }
    }
}

impl std::error::Error for GeoError {}

impl From<ProjectionError> for GeoError {
    fn from(e: ProjectionError) -> Self {
        GeoError::Projection(e)
    }
}

/// Geocentric WGS-84 earth radius at the given latitude, in meters.
///
/// `R(φ) = sqrt(((a² cos φ)² + (b² sin φ)²) / ((a cos φ)² + (b sin φ)²))`,
/// which is the semi-major axis at the equator and the semi-minor at a pole.
pub fn earth_radius_m(lat_deg: f64) -> f64 {
    let phi = lat_deg.to_radians();
    let (a, b) = (WGS84_SEMI_MAJOR_M, WGS84_SEMI_MINOR_M);
    let (c, s) = (phi.cos(), phi.sin());
    let num = (a * a * c).powi(2) + (b * b * s).powi(2);
    let den = (a * c).powi(2) + (b * s).powi(2);
    (num / den).sqrt()
}

/// Rotates a camera-frame ground offset into the compass frame.
///
/// Heading is degrees clockwise from north. The rotation is a proper
/// (orthogonal) rotation, so offsets keep their length and the inverse is the
/// transpose: `east = x cos θ + y sin θ`, `north = −x sin θ + y cos θ`.
pub fn rotate_to_north(ground: GroundOffset, heading_deg: f64) -> NorthOffset {
    let th = heading_deg.to_radians();
    let (c, s) = (th.cos(), th.sin());
    NorthOffset {
        east_m: ground.x_m * c + ground.y_m * s,
        north_m: -ground.x_m * s + ground.y_m * c,
    }
}

/// Rotates a compass-frame offset back into the camera frame at `heading_deg`.
fn rotate_to_camera(offset: NorthOffset, heading_deg: f64) -> GroundOffset {
    let th = heading_deg.to_radians();
    let (c, s) = (th.cos(), th.sin());
    GroundOffset {
        x_m: offset.east_m * c - offset.north_m * s,
        y_m: offset.east_m * s + offset.north_m * c,
    }
}

fn check_pole(lat_deg: f64) -> Result<(), GeoError> {
    if lat_deg.abs() > POLE_PROXIMITY_LAT_DEG {
        return Err(GeoError::PoleProximity { lat_deg });
    }
    Ok(())
}

/// Displaces `origin` by a metric east/north offset and returns the new GPS
/// position. The earth radius and the longitude scaling both use the origin
/// latitude, which makes [`gps_to_offset`] its exact algebraic inverse.
pub fn offset_to_gps(origin: GeoPoint, offset: NorthOffset) -> Result<GeoPoint, GeoError> {
    check_pole(origin.lat_deg)?;
    let r = earth_radius_m(origin.lat_deg);
    let lat = origin.lat_deg + (offset.north_m / r).to_degrees();
    let lon = origin.lon_deg + (offset.east_m / r).to_degrees() / origin.lat_deg.to_radians().cos();
    Ok(GeoPoint::new(lat, lon))
}

/// Metric east/north offset from `origin` to `target`, inverse of
/// [`offset_to_gps`].
pub fn gps_to_offset(origin: GeoPoint, target: GeoPoint) -> Result<NorthOffset, GeoError> {
    check_pole(origin.lat_deg)?;
    let r = earth_radius_m(origin.lat_deg);
    let north_m = (target.lat_deg - origin.lat_deg).to_radians() * r;
    let east_m =
        (target.lon_deg - origin.lon_deg).to_radians() * r * origin.lat_deg.to_radians().cos();
    Ok(NorthOffset { east_m, north_m })
}

/// A pixel successfully located on the ground, with every intermediate
/// quantity of the projection chain for auditing and downstream use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoLocation {
    /// GPS position of the ground point.
    pub position: GeoPoint,
    /// Camera-frame ground offset (meters right/forward of the UAV).
    pub ground: GroundOffset,
    /// Compass-frame offset (meters east/north of the UAV).
    pub north: NorthOffset,
    /// Slant distance from the camera to the ground point, in meters.
    pub slant_m: f64,
}

/// Projects an image pixel to its GPS position on the ground plane.
pub fn pixel_to_gps(cam: &CameraState, pixel: PixelOffset) -> Result<GeoLocation, GeoError> {
    let projected = cam.pixel_to_ground(pixel)?;
    let north = rotate_to_north(projected.ground, cam.heading_deg());
    let position = offset_to_gps(cam.position(), north)?;
    Ok(GeoLocation {
        position,
        ground: projected.ground,
        north,
        slant_m: projected.slant_m,
    })
}

/// Projects a GPS ground point into the image, inverse of [`pixel_to_gps`].
///
/// Returns the pixel together with an in-frame flag; a point behind the
/// camera is a [`ProjectionError::BehindCamera`] error.
pub fn gps_to_pixel(cam: &CameraState, target: GeoPoint) -> Result<ProjectedPixel, GeoError> {
    let offset = gps_to_offset(cam.position(), target)?;
    let ground = rotate_to_camera(offset, cam.heading_deg());
    Ok(cam.ground_to_pixel(ground)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::CameraState;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn rotation_matches_reference_values() {
        // Independently computed: θ=30°, (x=10, y=50).
        let n = rotate_to_north(GroundOffset { x_m: 10.0, y_m: 50.0 }, 30.0);
        assert!(close(n.east_m, 33.66025403784439, 1e-9), "east = {}", n.east_m);
        assert!(close(n.north_m, 38.30127018922193, 1e-9), "north = {}", n.north_m);
    }

    #[test]
    fn rotation_cardinal_headings() {
        let fwd = GroundOffset { x_m: 0.0, y_m: 100.0 };
        let n0 = rotate_to_north(fwd, 0.0);
        assert!(close(n0.east_m, 0.0, 1e-9) && close(n0.north_m, 100.0, 1e-9));
        let n90 = rotate_to_north(fwd, 90.0);
        assert!(close(n90.east_m, 100.0, 1e-9) && close(n90.north_m, 0.0, 1e-9));
        let n180 = rotate_to_north(fwd, 180.0);
        assert!(close(n180.east_m, 0.0, 1e-9) && close(n180.north_m, -100.0, 1e-9));
    }

    #[test]
    fn rotation_preserves_length() {
        for i in 0..360 {
            let g = GroundOffset { x_m: 12.5, y_m: -83.2 };
            let n = rotate_to_north(g, i as f64);
            assert!(close(n.norm_m(), g.x_m.hypot(g.y_m), 1e-9));
        }
    }

    #[test]
    fn earth_radius_reference_values() {
        assert!(close(earth_radius_m(0.0), 6_378_137.0, 1e-6));
        // Independently computed geocentric radius at 45°.
        assert!(close(earth_radius_m(45.0), 6_367_489.543741906, 1e-3));
        assert!(close(earth_radius_m(90.0), 6_356_752.314, 1e-6));
        assert!(close(earth_radius_m(-45.0), earth_radius_m(45.0), 1e-9));
    }

    #[test]
    fn offset_to_gps_reference_latitude_step() {
        // 1111.95 m north at the equator ≈ 0.009988816801767° of latitude.
        let origin = GeoPoint::new(0.0, 0.0);
        let p = offset_to_gps(origin, NorthOffset::new(0.0, 1111.95)).unwrap();
        assert!(close(p.lat_deg, 0.009988816801767019, 1e-12), "lat = {}", p.lat_deg);
        assert!(close(p.lon_deg, 0.0, 1e-15));
    }

    #[test]
    fn longitude_step_grows_toward_poles() {
        // The same 1000 m east step spans about twice the longitude at 60°
        // latitude compared to the equator (1/cos 60° = 2).
        let step = NorthOffset::new(1000.0, 0.0);
        let at_eq = offset_to_gps(GeoPoint::new(0.0, 0.0), step).unwrap().lon_deg;
        let at_60 = offset_to_gps(GeoPoint::new(60.0, 0.0), step).unwrap().lon_deg;
        let ratio = at_60 / at_eq;
        assert!(close(ratio, 2.005031261602863, 1e-6), "ratio = {ratio}");
    }

    #[test]
    fn offset_round_trip_is_exact() {
        let origin = GeoPoint::new(47.3345, 8.5512);
        for (e, n) in [(0.0, 0.0), (150.0, -75.0), (-3000.0, 12345.0), (0.001, 0.001)] {
            let p = offset_to_gps(origin, NorthOffset::new(e, n)).unwrap();
            let back = gps_to_offset(origin, p).unwrap();
            assert!(close(back.east_m, e, 1e-6), "east {e} -> {}", back.east_m);
            assert!(close(back.north_m, n, 1e-6), "north {n} -> {}", back.north_m);
        }
    }

    #[test]
    fn pole_proximity_is_rejected() {
        let near_pole = GeoPoint::new(89.95, 10.0);
        let err = offset_to_gps(near_pole, NorthOffset::new(1.0, 1.0)).unwrap_err();
        assert!(matches!(err, GeoError::PoleProximity { .. }));
        assert!(gps_to_offset(near_pole, GeoPoint::new(89.96, 10.0)).is_err());
        // 89.9° exactly is still allowed.
        assert!(offset_to_gps(GeoPoint::new(89.9, 0.0), NorthOffset::new(1.0, 1.0)).is_ok());
    }

    #[test]
    fn pixel_to_gps_round_trip() {
        let cam = CameraState::new(
            GeoPoint::new(47.5, 8.5),
            80.0,
            40.0,
            123.0,
            2600.0,
            3840,
            2160,
        )
        .unwrap();
        let px = PixelOffset { u: 312.0, v: -240.0 };
        let loc = pixel_to_gps(&cam, px).unwrap();
        let back = gps_to_pixel(&cam, loc.position).unwrap();
        assert!(back.in_frame);
        assert!(close(back.offset.u, px.u, 1e-6));
        assert!(close(back.offset.v, px.v, 1e-6));
    }

    #[test]
    fn heading_changes_do_not_move_ground_points() {
        // The same physical point, seen by the same camera pose at two
        // different headings, geolocates to the same GPS position.
        let base = GeoPoint::new(47.0, 8.0);
        let target = offset_to_gps(base, NorthOffset::new(35.0, 120.0)).unwrap();
        let mut first: Option<GeoPoint> = None;
        for heading in [0.0, 17.0, 90.0, 181.5, 270.0, 359.0] {
            let cam = CameraState::new(base, 60.0, 35.0, heading, 2600.0, 3840, 2160).unwrap();
            let px = match gps_to_pixel(&cam, target) {
                Ok(p) => p,
                Err(_) => continue, // behind the camera at this heading
            };
            let loc = pixel_to_gps(&cam, px.offset).unwrap();
            if let Some(f) = first {
                let d = gps_to_offset(f, loc.position).unwrap().norm_m();
                assert!(d < 1e-6, "heading {heading} moved the point by {d} m");
            } else {
                first = Some(loc.position);
            }
        }
        assert!(first.is_some());
    }
}
