//! Heatmap-to-GPS anomaly aggregation.
//!
//! An external anomaly detector emits per-frame heatmaps in image space.
//! Each frame, every heatmap cell below the horizon (and within a ground
//! range cutoff — far-off rows dissolve into horizon noise) is projected to
//! GPS and accumulated into a coarse memory map. Per-frame contributions to a
//! map cell are averaged, rescaled into [0, 1] when a frame's detector scores
//! exceed 1, and then the map applies its usual clamp-and-decay step. A
//! persistent anomaly therefore saturates toward the clamp while transient
//! noise decays away. Regions above an extraction threshold come back out as
//! GPS polygons.
//!
//! Projection cost matters (it runs per frame), so rows are culled once by
//! elevation — every pixel in a heatmap row shares one depression angle — and
//! the per-cell work is a handful of multiply-adds, no per-cell trig.

use crate::camera::CameraState;
use crate::geodesy::{self, GeoError, GeoPoint};
use crate::map::{MapError, MapSpec, MemoryMap};
use std::collections::BTreeMap;
use std::fmt;

/// Errors from heatmap aggregation.
#[derive(Debug)]
pub enum AnomalyError {
    /// The heatmap violates its invariants; the message names the field.
    InvalidHeatmap(String),
    InvalidConfig(String),
    Map(MapError),
    Geodesy(GeoError),
}

impl fmt::Display for AnomalyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AnomalyError::InvalidHeatmap(msg) => write!(f, "invalid heatmap: {msg}"),
            AnomalyError::InvalidConfig(msg) => write!(f, "invalid anomaly config: {msg}"),
            AnomalyError::Map(e) => write!(f, "map failure: {e}"),
            AnomalyError::Geodesy(e) => write!(f, "geodesy failure: {e}"),
        }
    }
}

impl std::error::Error for AnomalyError {}

impl From<MapError> for AnomalyError {
    fn from(e: MapError) -> Self {
        AnomalyError::Map(e)
    }
}

impl From<GeoError> for AnomalyError {
    fn from(e: GeoError) -> Self {
        AnomalyError::Geodesy(e)
    }
}

/// One frame's anomaly scores, row-major, possibly downsampled from frame
/// resolution. Scores are finite and non-negative; they need not be ≤ 1.
#[derive(Debug, Clone)]
pub struct FrameHeatmap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl FrameHeatmap {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self, AnomalyError> {
        if width == 0 || height == 0 {
            return Err(AnomalyError::InvalidHeatmap(format!(
                "dimensions {width}x{height} must be positive"
            )));
        }
        if values.len() != width * height {
            return Err(AnomalyError::InvalidHeatmap(format!(
                "{} values for {width}x{height} grid",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(AnomalyError::InvalidHeatmap(format!("score {v} not finite and >= 0")));
        }
        Ok(FrameHeatmap { width, height, values })
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn values(&self) -> &[f32] {
        &self.values
    }
}

/// Aggregation parameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AnomalyConfig {
    /// Grid spec of the anomaly map. Coarser cells than detection maps:
    /// heatmaps are dense, and 2 m cells keep per-frame cost bounded.
    pub map: MapSpec,
    /// Rows whose ground distance exceeds this are dropped as horizon noise.
    pub max_range_m: f64,
    /// Cell value at or above which a cell counts as anomalous.
    pub extraction_threshold: f32,
    /// Connected regions smaller than this are dropped.
    pub min_area_m2: f64,
}

impl Default for AnomalyConfig {
    fn default() -> Self {
        AnomalyConfig {
            map: MapSpec { cell_size_m: 2.0, ..MapSpec::default() },
            max_range_m: 500.0,
            extraction_threshold: 0.5,
            min_area_m2: 8.0,
        }
    }
}

/// Per-frame projection accounting. `rows_skipped_horizon` being the only
/// path that discards above-horizon rows makes the no-sky-contribution
/// invariant directly checkable.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ProjectionStats {
    /// Heatmap cells that contributed to some map cell.
    pub cells_projected: usize,
    /// Rows at or above the horizon (never projected).
    pub rows_skipped_horizon: usize,
    /// Below-horizon rows beyond max_range_m.
    pub rows_skipped_range: usize,
    /// Rows whose ray points behind the camera (steeper than straight down).
    pub rows_skipped_behind: usize,
    /// Cells that projected outside the map window.
    pub cells_outside_window: usize,
}

/// One anomalous region extracted from the map.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AnomalyRegion {
    /// Outer boundary of the cell union, in GPS, counterclockwise seen from
    /// above (interior holes are ignored). Not explicitly closed.
    pub polygon: Vec<GeoPoint>,
    pub peak_score: f32,
    pub area_m2: f64,
}

/// Projects one heatmap into the map (accumulate + per-cell mean + rescale +
/// deposit). Does not open or close the map frame; [`AnomalyAggregator::step`]
/// handles the full per-frame sequence.
pub fn project_heatmap(
    map: &mut MemoryMap,
    cam: &CameraState,
    hm: &FrameHeatmap,
    max_range_m: f64,
) -> Result<ProjectionStats, AnomalyError> {
    let mut stats = ProjectionStats::default();
    let n = map.n();
    let cell = map.spec().cell_size_m;
    let k = (n as f64 - 1.0) / 2.0;
    let inv_cell = 1.0 / cell;
    let (center_east, center_north) = map.center_offset_m();

    // Offsets measured from the UAV compose into anchor-frame offsets through
    // two exact per-frame scale factors (latitude circles shrink with cos φ),
    // so the inner loop is pure multiply-add.
    let anchor = map.anchor();
    let uav = cam.position();
    let uav_off = geodesy::gps_to_offset(anchor, uav)?;
    let r_anchor = geodesy::earth_radius_m(anchor.lat_deg);
    let r_uav = geodesy::earth_radius_m(uav.lat_deg);
    let scale_north = r_anchor / r_uav;
    let scale_east = (r_anchor * anchor.lat_deg.to_radians().cos())
        / (r_uav * uav.lat_deg.to_radians().cos());

    let f = cam.focal_px();
    let beta = cam.gimbal_pitch_deg();
    let dip = cam.horizon_dip_deg();
    let alt = cam.alt_m();
    let heading_rad = cam.heading_deg().to_radians();
    let (sin_h, cos_h) = (heading_rad.sin(), heading_rad.cos());
    let px_per_col = cam.img_w() as f64 / hm.width as f64;
    let px_per_row = cam.img_h() as f64 / hm.height as f64;
    let half_w = cam.img_w() as f64 / 2.0;
    let half_h = cam.img_h() as f64 / 2.0;

    let mut sum = vec![0.0f32; n * n];
    let mut count = vec![0u32; n * n];
    let mut touched: Vec<usize> = Vec::new();

    for hr in 0..hm.height {
        // Every cell in this heatmap row shares one ray elevation.
        let v = (hr as f64 + 0.5) * px_per_row - half_h;
        let alpha_deg = (-v / f).atan().to_degrees();
        let depression = beta - alpha_deg;
        if depression <= dip {
            stats.rows_skipped_horizon += 1;
            continue;
        }
        if depression > 90.0 {
            stats.rows_skipped_behind += 1;
            continue;
        }
        let y = (90.0 - depression).to_radians().tan() * alt;
        if y > max_range_m {
            stats.rows_skipped_range += 1;
            continue;
        }
        let w = f.hypot(v);
        let slant = alt.hypot(y);
        let x_per_u = slant / w;

        for hc in 0..hm.width {
            let score = hm.values[hr * hm.width + hc];
            let u = (hc as f64 + 0.5) * px_per_col - half_w;
            let x = u * x_per_u;
            // Camera-frame ground offset → north-aligned → anchor frame.
            let east = x * cos_h + y * sin_h;
            let north = -x * sin_h + y * cos_h;
            let east_anchor = uav_off.east_m + scale_east * east;
            let north_anchor = uav_off.north_m + scale_north * north;
            let col = ((east_anchor - center_east) * inv_cell + k).round();
            let row = (k - (north_anchor - center_north) * inv_cell).round();
            if row < 0.0 || col < 0.0 || row >= n as f64 || col >= n as f64 {
                stats.cells_outside_window += 1;
                continue;
            }
            let idx = row as usize * n + col as usize;
            if count[idx] == 0 {
                touched.push(idx);
            }
            sum[idx] += score;
            count[idx] += 1;
            stats.cells_projected += 1;
        }
    }

    // Per-cell mean, then rescale into [0, 1] only when this frame's scores
    // overflow the unit range: detectors with unbounded scores get comparable
    // decay semantics, while already-calibrated scores keep their absolute
    // scale (a blanket min-max stretch would inflate background noise to full
    // strength on quiet frames).
    let mut frame_max = 0.0f32;
    for &idx in &touched {
        frame_max = frame_max.max(sum[idx] / count[idx] as f32);
    }
    let scale = if frame_max > 1.0 { 1.0 / frame_max } else { 1.0 };
    for &idx in &touched {
        let contribution = (sum[idx] / count[idx] as f32) * scale;
        map.deposit(idx / n, idx % n, contribution);
    }
    Ok(stats)
}

/// Owns the anomaly map and runs the per-frame sequence: open frame, recenter
/// to the camera, project, close frame (clamp + decay).
#[derive(Debug, Clone)]
pub struct AnomalyAggregator {
    config: AnomalyConfig,
    map: MemoryMap,
}

impl AnomalyAggregator {
    pub fn new(config: AnomalyConfig, initial_center: GeoPoint) -> Result<Self, AnomalyError> {
        if !(config.max_range_m.is_finite() && config.max_range_m > 0.0) {
            return Err(AnomalyError::InvalidConfig(format!(
                "max_range_m {} must be > 0",
                config.max_range_m
            )));
        }
        if !(config.extraction_threshold.is_finite() && config.extraction_threshold > 0.0) {
            return Err(AnomalyError::InvalidConfig(format!(
                "extraction_threshold {} must be > 0",
                config.extraction_threshold
            )));
        }
        if !(config.min_area_m2.is_finite() && config.min_area_m2 >= 0.0) {
            return Err(AnomalyError::InvalidConfig(format!(
                "min_area_m2 {} must be >= 0",
                config.min_area_m2
            )));
        }
        let map = MemoryMap::new(config.map.clone(), initial_center, 0)?;
        Ok(AnomalyAggregator { config, map })
    }

    pub fn config(&self) -> &AnomalyConfig {
        &self.config
    }

    pub fn map(&self) -> &MemoryMap {
        &self.map
    }

    pub fn step(
        &mut self,
        cam: &CameraState,
        hm: &FrameHeatmap,
    ) -> Result<ProjectionStats, AnomalyError> {
        self.map.begin_frame();
        self.map.recenter(cam.position())?;
        let stats = project_heatmap(&mut self.map, cam, hm, self.config.max_range_m)?;
        self.map.end_frame()?;
        Ok(stats)
    }

    /// Regions currently above the extraction threshold.
    pub fn regions(&self) -> Vec<AnomalyRegion> {
        extract_regions(&self.map, self.config.extraction_threshold, self.config.min_area_m2)
    }
}

/// Connected components (4-connectivity) of cells at or above `threshold`,
/// dropping components smaller than `min_area_m2`. Regions come back in
/// deterministic discovery order (row-major by their first cell).
pub fn extract_regions(map: &MemoryMap, threshold: f32, min_area_m2: f64) -> Vec<AnomalyRegion> {
    let n = map.n();
    let cells = map.cells();
    let cell_area = map.spec().cell_size_m * map.spec().cell_size_m;
    let mut component = vec![u32::MAX; n * n];
    let mut regions = Vec::new();
    let mut next = 0u32;
    let mut stack = Vec::new();

    for start in 0..n * n {
        if cells[start] < threshold || component[start] != u32::MAX {
            continue;
        }
        let id = next;
        next += 1;
        let mut members = Vec::new();
        let mut peak = 0.0f32;
        stack.push(start);
        component[start] = id;
        while let Some(idx) = stack.pop() {
            members.push(idx);
            peak = peak.max(cells[idx]);
            let (r, c) = (idx / n, idx % n);
            let mut visit = |nr: usize, nc: usize| {
                let nidx = nr * n + nc;
                if cells[nidx] >= threshold && component[nidx] == u32::MAX {
                    component[nidx] = id;
                    stack.push(nidx);
                }
            };
            if r > 0 {
                visit(r - 1, c);
            }
            if r + 1 < n {
                visit(r + 1, c);
            }
            if c > 0 {
                visit(r, c - 1);
            }
            if c + 1 < n {
                visit(r, c + 1);
            }
        }
        let area_m2 = members.len() as f64 * cell_area;
        if area_m2 < min_area_m2 {
            continue;
        }
        members.sort_unstable();
        regions.push(AnomalyRegion {
            polygon: boundary_polygon(map, n, &members),
            peak_score: peak,
            area_m2,
        });
    }
    regions
}

/// Outer boundary of a set of cells as a GPS polygon. Every cell edge facing
/// a non-member neighbor becomes a directed unit edge (interior kept on the
/// left); stitching the edges end to end yields closed loops, and the loop
/// enclosing the largest area is the outer boundary (holes are ignored —
/// anomalous blobs with interior gaps are reported by their hull of cells).
fn boundary_polygon(map: &MemoryMap, n: usize, members: &[usize]) -> Vec<GeoPoint> {
    let inside = |idx: &usize| members.binary_search(idx).is_ok();
    // Directed edges between lattice corners; corner (r, c) is the NW corner
    // of cell (r, c). BTreeMap keeps stitching deterministic.
    let mut edges: BTreeMap<(usize, usize), Vec<(usize, usize)>> = BTreeMap::new();
    let mut add = |from: (usize, usize), to: (usize, usize)| {
        edges.entry(from).or_default().push(to);
    };
    for &idx in members {
        let (r, c) = (idx / n, idx % n);
        if r == 0 || !inside(&(idx - n)) {
            add((r, c + 1), (r, c)); // top edge, walking west
        }
        if r + 1 == n || !inside(&(idx + n)) {
            add((r + 1, c), (r + 1, c + 1)); // bottom edge, walking east
        }
        if c == 0 || !inside(&(idx - 1)) {
            add((r, c), (r + 1, c)); // left edge, walking south
        }
        if c + 1 == n || !inside(&(idx + 1)) {
            add((r + 1, c + 1), (r, c + 1)); // right edge, walking north
        }
    }
    for targets in edges.values_mut() {
        targets.sort_unstable();
    }

    let mut best_loop: Vec<(usize, usize)> = Vec::new();
    let mut best_area = -1.0f64;
    while let Some((&start, _)) = edges.iter().next() {
        let mut corners = vec![start];
        let mut current = start;
        loop {
            let targets = edges.get_mut(&current).expect("loop edges are closed");
            let next = targets.remove(0);
            if targets.is_empty() {
                edges.remove(&current);
            }
            if next == start {
                break;
            }
            corners.push(next);
            current = next;
        }
        // Shoelace area in cell units; |area| compares loop sizes.
        let mut area2 = 0.0f64;
        for i in 0..corners.len() {
            let (r1, c1) = corners[i];
            let (r2, c2) = corners[(i + 1) % corners.len()];
            area2 += c1 as f64 * r2 as f64 - c2 as f64 * r1 as f64;
        }
        if area2.abs() > best_area {
            best_area = area2.abs();
            best_loop = corners;
        }
    }

    // Drop collinear intermediate corners so a rectangle is 4 points.
    let m = best_loop.len();
    let mut simplified = Vec::new();
    for i in 0..m {
        let prev = best_loop[(i + m - 1) % m];
        let here = best_loop[i];
        let next = best_loop[(i + 1) % m];
        let d1 = (here.0 as i64 - prev.0 as i64, here.1 as i64 - prev.1 as i64);
        let d2 = (next.0 as i64 - here.0 as i64, next.1 as i64 - here.1 as i64);
        if d1.0 * d2.1 != d1.1 * d2.0 {
            simplified.push(here);
        }
    }
    simplified
        .into_iter()
        .map(|(r, c)| map.corner_position(r, c))
        .collect()
}
