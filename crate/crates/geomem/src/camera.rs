//! Pinhole projection between image pixels and a flat ground plane.
//!
//! Conventions: the gimbal pitch β is measured downward from horizontal
//! (0° = level, 90° = nadir). Pixel offsets are taken from the image center,
//! `u = col − width/2` (positive right) and `v = row − height/2` (positive
//! down, i.e. increasing image row). A pixel above the center line (`v < 0`)
//! casts a shallower ray than the optical axis and therefore hits the ground
//! farther out; the ray's elevation above the optical axis is
//! `α = arctan(−v / f)`.

use crate::geodesy::GeoPoint;
use std::fmt;

/// Errors from camera construction and pixel/ground projection.
#[derive(Debug, Clone, PartialEq)]
pub enum ProjectionError {
    /// Camera parameters are unusable; the message names the offender.
    InvalidCamera(String),
    /// The pixel's ray points at or above the horizon; it never meets the ground.
    AboveHorizon,
    /// The point lies behind the camera (ray depression over 90°, or y < 0).
    BehindCamera,
}

impl fmt::Display for ProjectionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProjectionError::InvalidCamera(msg) => write!(f, "invalid camera: {msg}"),
            ProjectionError::AboveHorizon => write!(f, "pixel ray at or above the horizon"),
            ProjectionError::BehindCamera => write!(f, "point lies behind the camera"),
        }
    }
}

impl std::error::Error for ProjectionError {}

/// Signed pixel offset from the image center; `u` right, `v` down.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PixelOffset {
    pub u: f64,
    pub v: f64,
}

impl PixelOffset {
    pub fn new(u: f64, v: f64) -> Self {
        PixelOffset { u, v }
    }
}

/// Ground-plane offset in the camera-heading frame: `x_m` to the right of the
/// heading, `y_m` forward along it. Both signed meters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GroundOffset {
    pub x_m: f64,
    pub y_m: f64,
}

impl GroundOffset {
    pub fn new(x_m: f64, y_m: f64) -> Self {
        GroundOffset { x_m, y_m }
    }
}

/// A pixel located on the ground plane, with its slant distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundIntersection {
    pub ground: GroundOffset,
    /// Slant range from the camera to the ground point, `√(h² + y²)` meters.
    pub slant_m: f64,
}

/// Result of projecting a ground point into the image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedPixel {
    pub offset: PixelOffset,
    /// Whether the pixel falls inside the image bounds.
    pub in_frame: bool,
}

/// Elevation of a pixel's ray above the optical axis, in degrees.
///
/// Positive for pixels above the image center (`v < 0`).
pub fn ray_elevation_deg(pixel: PixelOffset, focal_px: f64) -> f64 {
    (-pixel.v / focal_px).atan().to_degrees()
}

/// Validated UAV camera pose and intrinsics for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraState {
    position: GeoPoint,
    alt_m: f64,
    gimbal_pitch_deg: f64,
    heading_deg: f64,
    focal_px: f64,
    img_w: u32,
    img_h: u32,
}

impl CameraState {
    /// Builds a camera state, validating every field.
    ///
    /// Altitude and focal length must be positive, the gimbal pitch must lie
    /// in (0°, 90°] (strictly downward-looking), latitude within ±90°, and
    /// the heading is normalized into [0°, 360°).
    pub fn new(
        position: GeoPoint,
        alt_m: f64,
        gimbal_pitch_deg: f64,
        heading_deg: f64,
        focal_px: f64,
        img_w: u32,
        img_h: u32,
    ) -> Result<Self, ProjectionError> {
        let bad = |msg: String| Err(ProjectionError::InvalidCamera(msg));
        if !position.lat_deg.is_finite() || position.lat_deg.abs() > 90.0 {
            return bad(format!("latitude {} out of [-90, 90]", position.lat_deg));
        }
        if !position.lon_deg.is_finite() {
            return bad(format!("longitude {} not finite", position.lon_deg));
        }
        if !(alt_m.is_finite() && alt_m > 0.0) {
            return bad(format!("altitude {alt_m} must be > 0"));
        }
        if !(gimbal_pitch_deg.is_finite() && gimbal_pitch_deg > 0.0 && gimbal_pitch_deg <= 90.0) {
            return bad(format!("gimbal pitch {gimbal_pitch_deg} out of (0, 90]"));
        }
        if !heading_deg.is_finite() {
            return bad(format!("heading {heading_deg} not finite"));
        }
        if !(focal_px.is_finite() && focal_px > 0.0) {
            return bad(format!("focal length {focal_px} must be > 0"));
        }
        if img_w == 0 || img_h == 0 {
            return bad(format!("image size {img_w}x{img_h} must be non-zero"));
        }
        Ok(CameraState {
            position,
            alt_m,
            gimbal_pitch_deg,
            heading_deg: heading_deg.rem_euclid(360.0),
            focal_px,
            img_w,
            img_h,
        })
    }

    pub fn position(&self) -> GeoPoint {
        self.position
    }
    pub fn alt_m(&self) -> f64 {
        self.alt_m
    }
    pub fn gimbal_pitch_deg(&self) -> f64 {
        self.gimbal_pitch_deg
    }
    pub fn heading_deg(&self) -> f64 {
        self.heading_deg
    }
    pub fn focal_px(&self) -> f64 {
        self.focal_px
    }
    pub fn img_w(&self) -> u32 {
        self.img_w
    }
    pub fn img_h(&self) -> u32 {
        self.img_h
    }

    /// Converts absolute image coordinates (origin top-left) to center offsets.
    pub fn pixel_from_image_coords(&self, col: f64, row: f64) -> PixelOffset {
        PixelOffset {
            u: col - self.img_w as f64 / 2.0,
            v: row - self.img_h as f64 / 2.0,
        }
    }

    /// Converts center offsets back to absolute image coordinates.
    pub fn image_coords_from_pixel(&self, pixel: PixelOffset) -> (f64, f64) {
        (
            pixel.u + self.img_w as f64 / 2.0,
            pixel.v + self.img_h as f64 / 2.0,
        )
    }

    /// Distance to the visual horizon for the camera altitude, in meters
    /// (`3570 · √h` with h in meters).
    pub fn horizon_distance_m(&self) -> f64 {
        3570.0 * self.alt_m.sqrt()
    }

    /// Dip of the horizon below horizontal, in degrees:
    /// `γ = arcsin(h / horizon_distance)`.
    pub fn horizon_dip_deg(&self) -> f64 {
        (self.alt_m / self.horizon_distance_m()).asin().to_degrees()
    }

    /// Signed row offset of the horizon line from the image center, truncated
    /// to the image bounds. Negative means the horizon sits above the center
    /// row; `±img_h/2` when it falls outside the frame entirely.
    pub fn horizon_row_offset(&self) -> f64 {
        let gamma = self.horizon_dip_deg();
        let raw = (gamma - self.gimbal_pitch_deg).to_radians().tan() * self.focal_px;
        let half = self.img_h as f64 / 2.0;
        raw.clamp(-half, half)
    }

    /// Intersects a pixel's ray with the flat ground plane.
    ///
    /// Errors with [`ProjectionError::AboveHorizon`] when the ray's depression
    /// does not exceed the horizon dip (the ray never meets ground within the
    /// horizon), and [`ProjectionError::BehindCamera`] when the depression
    /// exceeds 90° (the intersection would lie behind the UAV). Exactly 90°
    /// is the ray straight down and lands directly beneath the camera.
    pub fn pixel_to_ground(
        &self,
        pixel: PixelOffset,
    ) -> Result<GroundIntersection, ProjectionError> {
        let alpha_deg = ray_elevation_deg(pixel, self.focal_px);
        let depression_deg = self.gimbal_pitch_deg - alpha_deg;
        if depression_deg > 90.0 {
            return Err(ProjectionError::BehindCamera);
        }
        if depression_deg <= self.horizon_dip_deg() {
            return Err(ProjectionError::AboveHorizon);
        }
        let y_m = (90.0 - depression_deg).to_radians().tan() * self.alt_m;
        let w = self.focal_px.hypot(pixel.v);
        let slant_m = self.alt_m.hypot(y_m);
        let x_m = pixel.u / w * slant_m;
        Ok(GroundIntersection {
            ground: GroundOffset { x_m, y_m },
            slant_m,
        })
    }

    /// Projects a ground-plane point into the image, inverse of
    /// [`CameraState::pixel_to_ground`].
    pub fn ground_to_pixel(&self, ground: GroundOffset) -> Result<ProjectedPixel, ProjectionError> {
        if ground.y_m < 0.0 {
            return Err(ProjectionError::BehindCamera);
        }
        // Depression of the ray to (·, y), then its elevation above the axis.
        let depression_deg = 90.0 - (ground.y_m / self.alt_m).atan().to_degrees();
        let alpha_deg = self.gimbal_pitch_deg - depression_deg;
        let v = -self.focal_px * alpha_deg.to_radians().tan();
        let w = self.focal_px.hypot(v);
        let slant_m = self.alt_m.hypot(ground.y_m);
        let u = ground.x_m * w / slant_m;
        let in_frame = u.abs() <= self.img_w as f64 / 2.0 && v.abs() <= self.img_h as f64 / 2.0;
        Ok(ProjectedPixel {
            offset: PixelOffset { u, v },
            in_frame,
        })
    }
}
