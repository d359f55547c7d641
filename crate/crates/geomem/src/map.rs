//! Per-class temporal memory maps.
//!
//! A memory map is a UAV-centric, north-aligned square grid of likelihood
//! values in [0, 1]. Each frame, detection confidences are splatted into the
//! grid as truncated Gaussians; at the end of the frame the grid is clamped
//! to 1 and decayed by a forgetting factor. The grid lives in a local metric
//! frame anchored at the map's creation point, and the center only ever moves
//! by whole cells (positions snap to the cell lattice), so following the UAV
//! is a pure integer shift of the grid contents — no resampling, no drift.
//!
//! Grid layout: row-major, row 0 is the northernmost row and columns grow
//! eastward.

use crate::geodesy::{self, GeoError, GeoPoint, NorthOffset, POLE_PROXIMITY_LAT_DEG};
use std::fmt;

/// On-disk map format version written into dump headers.
pub const MAP_FORMAT_VERSION: u32 = 1;

/// Errors from map construction, stepping, and (de)serialization.
#[derive(Debug)]
pub enum MapError {
    /// The map spec is internally inconsistent; the message names the field.
    InvalidSpec(String),
    /// `end_frame` was called twice without an intervening `begin_frame`.
    DoubleEndFrame,
    /// Maps with incompatible specs or classes were combined.
    SpecMismatch(String),
    /// A serialized map has an unsupported format version.
    VersionMismatch { found: u32 },
    /// A serialized map is corrupt or truncated.
    Malformed(String),
    /// A geodetic conversion failed (map anchored too close to a pole).
    Geodesy(GeoError),
}

impl fmt::Display for MapError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MapError::InvalidSpec(msg) => write!(f, "invalid map spec: {msg}"),
            MapError::DoubleEndFrame => {
                write!(f, "end_frame called twice without an intervening begin_frame")
            }
            MapError::SpecMismatch(msg) => write!(f, "map spec mismatch: {msg}"),
            MapError::VersionMismatch { found } => write!(
                f,
                "unsupported map format version {found} (expected {MAP_FORMAT_VERSION})"
            ),
            MapError::Malformed(msg) => write!(f, "malformed map dump: {msg}"),
            MapError::Geodesy(e) => write!(f, "geodesy failure: {e}"),
        }
    }
}

impl std::error::Error for MapError {}

impl From<GeoError> for MapError {
    fn from(e: GeoError) -> Self {
        MapError::Geodesy(e)
    }
}

/// Geometry and dynamics parameters of a memory map.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct MapSpec {
    /// Side length of the square window, meters.
    pub edge_size_m: f64,
    /// Side length of one grid cell, meters. Must divide the edge evenly.
    pub cell_size_m: f64,
    /// Truncation radius of a confidence splat, meters (Chebyshev).
    pub splat_radius_m: f64,
    /// Per-frame decay factor φ applied after clamping.
    pub forgetting_factor: f64,
    /// Scale s₀ applied to a detection confidence before splatting.
    pub splat_scale: f64,
}

impl Default for MapSpec {
    fn default() -> Self {
        MapSpec {
            edge_size_m: 300.0,
            cell_size_m: 0.5,
            splat_radius_m: 6.0,
            forgetting_factor: 0.9,
            splat_scale: 0.2,
        }
    }
}

impl MapSpec {
    /// Validates the spec and returns the grid dimension `n = edge / cell`.
    pub fn grid_cells(&self) -> Result<usize, MapError> {
        let bad = |msg: String| Err(MapError::InvalidSpec(msg));
        if !(self.edge_size_m.is_finite() && self.edge_size_m > 0.0) {
            return bad(format!("edge_size_m {} must be > 0", self.edge_size_m));
        }
        if !(self.cell_size_m.is_finite() && self.cell_size_m > 0.0) {
            return bad(format!("cell_size_m {} must be > 0", self.cell_size_m));
        }
        let ratio = self.edge_size_m / self.cell_size_m;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-6 {
            return bad(format!(
                "edge_size_m {} is not a whole number of {} m cells",
                self.edge_size_m, self.cell_size_m
            ));
        }
        if !(self.splat_radius_m.is_finite() && self.splat_radius_m >= 0.0) {
            return bad(format!("splat_radius_m {} must be >= 0", self.splat_radius_m));
        }
        if self.splat_radius_m >= self.edge_size_m / 2.0 {
            return bad(format!(
                "splat_radius_m {} must be smaller than half the edge ({} m)",
                self.splat_radius_m,
                self.edge_size_m / 2.0
            ));
        }
        if !(self.forgetting_factor > 0.0 && self.forgetting_factor <= 1.0) {
            return bad(format!(
                "forgetting_factor {} out of (0, 1]",
                self.forgetting_factor
            ));
        }
        if !(self.splat_scale.is_finite() && self.splat_scale > 0.0) {
            return bad(format!("splat_scale {} must be > 0", self.splat_scale));
        }
        Ok(n as usize)
    }
}

/// Whether a splat landed inside the map window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplatOutcome {
    Applied,
    /// The splat center fell outside the window; the map is unchanged.
    OutsideWindow,
}

/// Header line of the on-disk map dump format.
#[derive(Debug, serde::Serialize, serde::Deserialize)]
struct MapHeader {
    format_version: u32,
    class_id: u32,
    n: usize,
    edge_size_m: f64,
    cell_size_m: f64,
    splat_radius_m: f64,
    forgetting_factor: f64,
    splat_scale: f64,
    center_lat: f64,
    center_lon: f64,
}

/// A single-class temporal memory map.
#[derive(Debug, Clone)]
pub struct MemoryMap {
    spec: MapSpec,
    class_id: u32,
    /// Fixed origin of the local metric frame (the center at creation).
    anchor: GeoPoint,
    /// Snapped east/north offset of the current window center from the anchor;
    /// always an exact multiple of the cell size.
    center_east_m: f64,
    center_north_m: f64,
    n: usize,
    cells: Vec<f32>,
    /// Precomputed splat kernel, one weight per (dr, dc) offset.
    kernel: Vec<f64>,
    radius_cells: i64,
    frame_open: bool,
}

impl MemoryMap {
    /// Creates an empty map of `class_id` centered at `center`.
    pub fn new(spec: MapSpec, center: GeoPoint, class_id: u32) -> Result<Self, MapError> {
        let n = spec.grid_cells()?;
        if center.lat_deg.abs() > POLE_PROXIMITY_LAT_DEG {
            return Err(MapError::Geodesy(GeoError::PoleProximity {
                lat_deg: center.lat_deg,
            }));
        }
        let radius_cells = (spec.splat_radius_m / spec.cell_size_m + 1e-9).floor() as i64;
        let side = 2 * radius_cells + 1;
        let sigma = spec.splat_radius_m / 3.0;
        let mut kernel = Vec::with_capacity((side * side) as usize);
        for dr in -radius_cells..=radius_cells {
            for dc in -radius_cells..=radius_cells {
                let d2 = (dr as f64 * spec.cell_size_m).powi(2)
                    + (dc as f64 * spec.cell_size_m).powi(2);
                kernel.push((-d2 / (sigma * sigma)).exp());
            }
        }
        Ok(MemoryMap {
            spec,
            class_id,
            anchor: center,
            center_east_m: 0.0,
            center_north_m: 0.0,
            n,
            cells: vec![0.0; n * n],
            kernel,
            radius_cells,
            frame_open: true,
        })
    }

    pub fn spec(&self) -> &MapSpec {
        &self.spec
    }
    pub fn class_id(&self) -> u32 {
        self.class_id
    }
    /// Grid dimension (cells per side).
    pub fn n(&self) -> usize {
        self.n
    }
    /// Raw cell values, row-major, row 0 northernmost.
    pub fn cells(&self) -> &[f32] {
        &self.cells
    }
    pub fn cell(&self, row: usize, col: usize) -> f32 {
        self.cells[row * self.n + col]
    }

    /// Fixed origin of the map's local metric frame.
    pub fn anchor(&self) -> GeoPoint {
        self.anchor
    }

    /// Snapped (east, north) offset of the current window center from the
    /// anchor, meters; always whole multiples of the cell size.
    pub fn center_offset_m(&self) -> (f64, f64) {
        (self.center_east_m, self.center_north_m)
    }

    /// GPS position of the current window center.
    pub fn center(&self) -> GeoPoint {
        geodesy::offset_to_gps(
            self.anchor,
            NorthOffset::new(self.center_east_m, self.center_north_m),
        )
        .expect("anchor latitude validated at construction")
    }

    fn offsets_from_anchor(&self, position: GeoPoint) -> NorthOffset {
        geodesy::gps_to_offset(self.anchor, position)
            .expect("anchor latitude validated at construction")
    }

    fn half_index(&self) -> f64 {
        (self.n as f64 - 1.0) / 2.0
    }

    /// Grid cell containing `position`, or `None` outside the window.
    pub fn cell_index(&self, position: GeoPoint) -> Option<(usize, usize)> {
        let off = self.offsets_from_anchor(position);
        let k = self.half_index();
        let col = ((off.east_m - self.center_east_m) / self.spec.cell_size_m + k).round();
        let row = (k - (off.north_m - self.center_north_m) / self.spec.cell_size_m).round();
        if row < 0.0 || col < 0.0 || row >= self.n as f64 || col >= self.n as f64 {
            return None;
        }
        Some((row as usize, col as usize))
    }

    /// GPS position of the center of cell (row, col).
    pub fn cell_position(&self, row: usize, col: usize) -> GeoPoint {
        let k = self.half_index();
        let east = self.center_east_m + (col as f64 - k) * self.spec.cell_size_m;
        let north = self.center_north_m + (k - row as f64) * self.spec.cell_size_m;
        geodesy::offset_to_gps(self.anchor, NorthOffset::new(east, north))
            .expect("anchor latitude validated at construction")
    }

    /// GPS position of a grid corner: `row` and `col` index the cell
    /// boundaries, so both run 0..=n. Corner (r, c) is the north-west corner
    /// of cell (r, c); corner (n, n) is the grid's south-east extreme.
    pub fn corner_position(&self, row: usize, col: usize) -> GeoPoint {
        debug_assert!(row <= self.n && col <= self.n);
        let half = self.n as f64 / 2.0;
        let east = self.center_east_m + (col as f64 - half) * self.spec.cell_size_m;
        let north = self.center_north_m + (half - row as f64) * self.spec.cell_size_m;
        geodesy::offset_to_gps(self.anchor, NorthOffset::new(east, north))
            .expect("anchor latitude validated at construction")
    }

    /// Opens a new splat phase. Pipelines call this once per frame before
    /// recentering and splatting.
    pub fn begin_frame(&mut self) {
        self.frame_open = true;
    }

    /// Moves the window center to the UAV position (snapped to the cell
    /// lattice) and shifts the grid contents by the corresponding whole-cell
    /// offset. Returns the applied shift as (cells north, cells east); values
    /// that stay inside the window are preserved bit-for-bit, newly exposed
    /// cells are zero.
    pub fn recenter(&mut self, uav_position: GeoPoint) -> Result<(i64, i64), MapError> {
        let off = geodesy::gps_to_offset(self.anchor, uav_position).map_err(MapError::Geodesy)?;
        let cell = self.spec.cell_size_m;
        let snapped_east = (off.east_m / cell).round() * cell;
        let snapped_north = (off.north_m / cell).round() * cell;
        let de = ((snapped_east - self.center_east_m) / cell).round() as i64;
        let dn = ((snapped_north - self.center_north_m) / cell).round() as i64;
        self.center_east_m = snapped_east;
        self.center_north_m = snapped_north;
        if de == 0 && dn == 0 {
            return Ok((0, 0));
        }
        let n = self.n as i64;
        let mut fresh = vec![0.0f32; self.cells.len()];
        // A world cell at new index (r, c) was previously at (r − dn, c + de).
        let col_start = 0.max(-de) as usize;
        let col_end = n.min(n - de).max(0) as usize;
        if col_start < col_end {
            for r in 0..self.n {
                let sr = r as i64 - dn;
                if sr < 0 || sr >= n {
                    continue;
                }
                let src_start = sr as usize * self.n + (col_start as i64 + de) as usize;
                let dst_start = r * self.n + col_start;
                let len = col_end - col_start;
                fresh[dst_start..dst_start + len]
                    .copy_from_slice(&self.cells[src_start..src_start + len]);
            }
        }
        self.cells = fresh;
        Ok((dn, de))
    }

    /// Splats a detection confidence at `position`: a truncated Gaussian of
    /// peak `splat_scale · confidence` is accumulated (pre-clamp) into every
    /// cell within the Chebyshev splat radius.
    pub fn splat(&mut self, position: GeoPoint, confidence: f64) -> SplatOutcome {
        debug_assert!((0.0..=1.0).contains(&confidence), "confidence {confidence}");
        let Some((row, col)) = self.cell_index(position) else {
            return SplatOutcome::OutsideWindow;
        };
        let s = self.spec.splat_scale * confidence;
        let rc = self.radius_cells;
        let side = (2 * rc + 1) as usize;
        let n = self.n as i64;
        // Clamp the column span once per row and walk contiguous slices, so
        // the inner loop is a straight multiply-accumulate.
        let dc_lo = (-rc).max(-(col as i64));
        let dc_hi = rc.min(n - 1 - col as i64);
        if dc_lo > dc_hi {
            return SplatOutcome::Applied;
        }
        let len = (dc_hi - dc_lo + 1) as usize;
        for dr in -rc..=rc {
            let rr = row as i64 + dr;
            if rr < 0 || rr >= n {
                continue;
            }
            let kbase = ((dr + rc) as usize) * side + (dc_lo + rc) as usize;
            let cbase = rr as usize * self.n + (col as i64 + dc_lo) as usize;
            let weights = &self.kernel[kbase..kbase + len];
            let cells = &mut self.cells[cbase..cbase + len];
            for (cell, &w) in cells.iter_mut().zip(weights) {
                *cell += (s * w) as f32;
            }
        }
        SplatOutcome::Applied
    }

    /// Likelihood at `position` (nearest cell), 0 outside the window.
    pub fn query(&self, position: GeoPoint) -> f32 {
        match self.cell_index(position) {
            Some((row, col)) => self.cells[row * self.n + col],
            None => 0.0,
        }
    }

    /// Adds a raw pre-clamp contribution to one cell. Used by heatmap
    /// aggregation, which deposits already-aggregated values instead of
    /// Gaussian splats.
    pub fn deposit(&mut self, row: usize, col: usize, amount: f32) {
        self.cells[row * self.n + col] += amount;
    }

    /// Closes the frame: clamps every cell to 1, then decays it by the
    /// forgetting factor. Erroring on a second call without an intervening
    /// [`MemoryMap::begin_frame`] guards against double-stepping a map.
    pub fn end_frame(&mut self) -> Result<(), MapError> {
        if !self.frame_open {
            return Err(MapError::DoubleEndFrame);
        }
        let phi = self.spec.forgetting_factor as f32;
        for c in &mut self.cells {
            *c = c.min(1.0) * phi;
        }
        self.frame_open = false;
        Ok(())
    }

    /// An independent copy of the current map state.
    pub fn snapshot(&self) -> MemoryMap {
        self.clone()
    }

    /// Serializes the map: a one-line JSON header, a newline, then n×n
    /// little-endian f32 cells in row-major order (row 0 northernmost).
    pub fn to_bytes(&self) -> Vec<u8> {
        let center = self.center();
        let header = MapHeader {
            format_version: MAP_FORMAT_VERSION,
            class_id: self.class_id,
            n: self.n,
            edge_size_m: self.spec.edge_size_m,
            cell_size_m: self.spec.cell_size_m,
            splat_radius_m: self.spec.splat_radius_m,
            forgetting_factor: self.spec.forgetting_factor,
            splat_scale: self.spec.splat_scale,
            center_lat: center.lat_deg,
            center_lon: center.lon_deg,
        };
        let mut out = serde_json::to_string(&header)
            .expect("map header serialization cannot fail")
            .into_bytes();
        out.push(b'\n');
        out.reserve(self.cells.len() * 4);
        for v in &self.cells {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Deserializes a map written by [`MemoryMap::to_bytes`].
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, MapError> {
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| MapError::Malformed("missing header line".into()))?;
        let header: MapHeader = serde_json::from_slice(&bytes[..newline])
            .map_err(|e| MapError::Malformed(format!("bad header: {e}")))?;
        if header.format_version != MAP_FORMAT_VERSION {
            return Err(MapError::VersionMismatch {
                found: header.format_version,
            });
        }
        let spec = MapSpec {
            edge_size_m: header.edge_size_m,
            cell_size_m: header.cell_size_m,
            splat_radius_m: header.splat_radius_m,
            forgetting_factor: header.forgetting_factor,
            splat_scale: header.splat_scale,
        };
        let mut map = MemoryMap::new(
            spec,
            GeoPoint::new(header.center_lat, header.center_lon),
            header.class_id,
        )?;
        if map.n != header.n {
            return Err(MapError::Malformed(format!(
                "header n={} disagrees with edge/cell ({})",
                header.n, map.n
            )));
        }
        let body = &bytes[newline + 1..];
        let expect = map.n * map.n * 4;
        if body.len() != expect {
            return Err(MapError::Malformed(format!(
                "expected {expect} cell bytes, found {}",
                body.len()
            )));
        }
        for (i, chunk) in body.chunks_exact(4).enumerate() {
            map.cells[i] = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        }
        Ok(map)
    }
}

impl PartialEq for MemoryMap {
    /// Maps compare equal when they describe the same grid content: same
    /// spec, class, current window center, and cell values. The anchor is an
    /// internal detail (a deserialized map is re-anchored at its center).
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.class_id == other.class_id
            && self.center() == other.center()
            && self.cells == other.cells
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn anchor() -> GeoPoint {
        GeoPoint::new(47.25, 8.75)
    }

    fn point_at(east_m: f64, north_m: f64) -> GeoPoint {
        geodesy::offset_to_gps(anchor(), NorthOffset::new(east_m, north_m)).unwrap()
    }

    fn fresh_map() -> MemoryMap {
        MemoryMap::new(MapSpec::default(), anchor(), 0).unwrap()
    }

    #[test]
    fn default_spec_builds_600_cell_grid() {
        assert_eq!(MapSpec::default().grid_cells().unwrap(), 600);
        let m = fresh_map();
        assert_eq!(m.n(), 600);
        assert!(m.cells().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bad_specs_are_rejected() {
        let cases = [
            MapSpec { edge_size_m: 0.0, ..MapSpec::default() },
            MapSpec { cell_size_m: 0.0, ..MapSpec::default() },
            MapSpec { edge_size_m: 10.0, cell_size_m: 3.0, ..MapSpec::default() },
            MapSpec { splat_radius_m: 150.0, ..MapSpec::default() },
            MapSpec { forgetting_factor: 0.0, ..MapSpec::default() },
            MapSpec { forgetting_factor: 1.5, ..MapSpec::default() },
            MapSpec { splat_scale: 0.0, ..MapSpec::default() },
        ];
        for spec in cases {
            assert!(spec.grid_cells().is_err(), "{spec:?} should be invalid");
        }
    }

    #[test]
    fn maps_near_poles_are_rejected() {
        let err = MemoryMap::new(MapSpec::default(), GeoPoint::new(89.95, 0.0), 0).unwrap_err();
        assert!(matches!(err, MapError::Geodesy(GeoError::PoleProximity { .. })));
    }

    #[test]
    fn splat_peak_equals_scaled_confidence() {
        let mut m = fresh_map();
        let p = point_at(3.0, -7.0);
        assert_eq!(m.splat(p, 0.5), SplatOutcome::Applied);
        let peak = m.query(p);
        assert!((peak - 0.1).abs() < 1e-6, "peak = {peak}");
    }

    #[test]
    fn splat_kernel_falls_off_with_distance() {
        let mut m = fresh_map();
        // Cell centers sit at k·0.5 + 0.25; splat on one so the kernel's
        // symmetry shows in the grid.
        let p = point_at(0.25, 0.25);
        m.splat(p, 1.0);
        // One cell east = 0.5 m; σ = 2 m; weight = exp(−(0.5/2)²).
        let neighbor = m.query(point_at(0.75, 0.25));
        let expect = 0.2 * (-0.0625f64).exp();
        assert!((neighbor as f64 - expect).abs() < 1e-6, "neighbor = {neighbor}");
        // Symmetric in all four directions.
        assert_eq!(neighbor, m.query(point_at(-0.25, 0.25)));
        assert_eq!(neighbor, m.query(point_at(0.25, 0.75)));
        assert_eq!(neighbor, m.query(point_at(0.25, -0.25)));
    }

    #[test]
    fn splat_is_local_within_chebyshev_radius() {
        let mut m = fresh_map();
        m.splat(point_at(0.25, 0.25), 1.0);
        // 12 cells = 6 m is the last affected ring; 13 cells is untouched.
        assert!(m.query(point_at(0.25 + 6.0, 0.25)) > 0.0);
        assert_eq!(m.query(point_at(0.25 + 6.5, 0.25)), 0.0);
        assert_eq!(m.query(point_at(0.25 + 6.5, 0.25 + 6.5)), 0.0);
    }

    #[test]
    fn splats_outside_window_are_ignored() {
        let mut m = fresh_map();
        assert_eq!(m.splat(point_at(400.0, 0.0), 1.0), SplatOutcome::OutsideWindow);
        assert!(m.cells().iter().all(|&v| v == 0.0));
        assert_eq!(m.query(point_at(400.0, 0.0)), 0.0);
    }

    #[test]
    fn end_frame_clamps_then_decays() {
        let mut m = fresh_map();
        let p = point_at(0.0, 0.0);
        for _ in 0..20 {
            m.splat(p, 1.0); // 20 × 0.2 = 4.0 pre-clamp at the peak
        }
        assert!(m.query(p) > 1.0);
        m.end_frame().unwrap();
        let v = m.query(p);
        assert!((v - 0.9).abs() < 1e-6, "clamped+decayed = {v}");
    }

    #[test]
    fn empty_frames_decay_geometrically() {
        let mut m = fresh_map();
        let p = point_at(1.0, 1.0);
        m.splat(p, 0.5);
        m.end_frame().unwrap();
        let mut expect = m.query(p);
        for _ in 0..25 {
            m.begin_frame();
            m.end_frame().unwrap();
            expect = expect.min(1.0) * 0.9f32;
            assert_eq!(m.query(p), expect);
        }
    }

    #[test]
    fn double_end_frame_is_an_error() {
        let mut m = fresh_map();
        m.end_frame().unwrap();
        assert!(matches!(m.end_frame(), Err(MapError::DoubleEndFrame)));
        m.begin_frame();
        assert!(m.end_frame().is_ok());
    }

    #[test]
    fn recenter_shifts_contents_by_whole_cells() {
        let mut m = fresh_map();
        let p = point_at(2.0, -3.0);
        m.splat(p, 1.0);
        let before = m.clone();
        // 5 m north, 3 m west = 10 cells north, −6 cells east.
        let shift = m.recenter(point_at(-3.0, 5.0)).unwrap();
        assert_eq!(shift, (10, -6));
        let n = m.n();
        for r in 0..n {
            for c in 0..n {
                let sr = r as i64 - 10;
                let sc = c as i64 + (-6);
                let expect = if sr >= 0 && (sr as usize) < n && sc >= 0 && (sc as usize) < n {
                    before.cell(sr as usize, sc as usize)
                } else {
                    0.0
                };
                assert_eq!(m.cell(r, c), expect, "cell ({r}, {c})");
            }
        }
        // World-fixed content still reads back at the same GPS point.
        assert_eq!(m.query(p), before.query(p));
    }

    #[test]
    fn sub_cell_moves_do_not_shift_the_grid() {
        let mut m = fresh_map();
        m.splat(point_at(0.0, 0.0), 0.8);
        let before = m.cells().to_vec();
        let shift = m.recenter(point_at(0.2, -0.13)).unwrap();
        assert_eq!(shift, (0, 0));
        assert_eq!(m.cells(), &before[..]);
    }

    #[test]
    fn recenter_snaps_to_the_cell_lattice() {
        let mut m = fresh_map();
        m.splat(point_at(0.0, 0.0), 1.0);
        let peak = m.query(point_at(0.0, 0.0));
        // 0.3 m east snaps to half a meter: one whole cell.
        let shift = m.recenter(point_at(0.3, 0.0)).unwrap();
        assert_eq!(shift, (0, 1));
        // Content is still addressed by the same GPS position.
        assert_eq!(m.query(point_at(0.0, 0.0)), peak);
    }

    #[test]
    fn moving_far_away_clears_the_window() {
        let mut m = fresh_map();
        m.splat(point_at(0.0, 0.0), 1.0);
        m.recenter(point_at(10_000.0, 0.0)).unwrap();
        assert!(m.cells().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn serialization_round_trips_bit_exactly() {
        let mut m = fresh_map();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let e = rng.gen_range(-140.0..140.0);
            let n = rng.gen_range(-140.0..140.0);
            m.splat(point_at(e, n), rng.gen_range(0.1..1.0));
        }
        m.end_frame().unwrap();
        m.recenter(point_at(12.0, -7.5)).unwrap();
        let bytes = m.to_bytes();
        let back = MemoryMap::from_bytes(&bytes).unwrap();
        assert_eq!(m, back);
        assert_eq!(bytes, back.to_bytes());

        let fresh = fresh_map();
        assert_eq!(fresh, MemoryMap::from_bytes(&fresh.to_bytes()).unwrap());
    }

    #[test]
    fn deserialization_rejects_bad_input() {
        let m = fresh_map();
        let bytes = m.to_bytes();

        let mut wrong_version = String::from_utf8(bytes[..bytes.iter().position(|&b| b == b'\n').unwrap()].to_vec()).unwrap();
        wrong_version = wrong_version.replace("\"format_version\":1", "\"format_version\":9");
        let mut doc = wrong_version.into_bytes();
        doc.push(b'\n');
        doc.extend_from_slice(&bytes[bytes.iter().position(|&b| b == b'\n').unwrap() + 1..]);
        assert!(matches!(
            MemoryMap::from_bytes(&doc),
            Err(MapError::VersionMismatch { found: 9 })
        ));

        assert!(matches!(
            MemoryMap::from_bytes(&bytes[..bytes.len() - 4]),
            Err(MapError::Malformed(_))
        ));
        assert!(matches!(MemoryMap::from_bytes(b"not json"), Err(MapError::Malformed(_))));
    }

    #[test]
    fn repeated_splats_accumulate_linearly_before_clamping() {
        let spot = point_at(4.0, 4.0);
        let mut one = fresh_map();
        one.splat(spot, 0.3);
        let single = one.query(spot);
        let mut many = fresh_map();
        for _ in 0..7 {
            many.splat(spot, 0.3);
        }
        let total = many.query(spot);
        assert!(
            (total - 7.0 * single).abs() < 1e-5,
            "7 splats = {total}, expected ≈ {}",
            7.0 * single
        );
    }

    #[test]
    fn values_stay_in_unit_range_after_end_frame() {
        let mut m = fresh_map();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for frame in 0..30 {
            if frame > 0 {
                m.begin_frame();
            }
            for _ in 0..rng.gen_range(0..40) {
                let e = rng.gen_range(-20.0..20.0);
                let n = rng.gen_range(-20.0..20.0);
                m.splat(point_at(e, n), rng.gen_range(0.0..1.0));
            }
            m.end_frame().unwrap();
            let phi = m.spec().forgetting_factor as f32;
            assert!(m.cells().iter().all(|&v| (0.0..=phi).contains(&v)));
        }
    }
}
