//! Aerial-camera geolocation and temporal memory maps.
//!
//! The crate turns per-frame object detections from a gimbal-stabilized UAV
//! camera into GPS positions on a flat ground plane, accumulates them in
//! per-class, UAV-centric likelihood grids ("memory maps") that saturate and
//! decay over time, and uses those grids to boost low-confidence detections,
//! reject implausibly sized boxes, track objects in world coordinates, map
//! anomaly heatmaps, and fuse evidence across multiple UAVs.
//!
//! Module layout:
//! - [`camera`]: pinhole projection between pixels and the ground plane.
//! - [`geodesy`]: WGS-84 offsets, heading rotation, pixel↔GPS compositions.
//! - [`map`]: splat/clamp/decay memory-map grids.
//! - [`size_filter`]: GP-regression distance→size plausibility bands.
//! - [`vod`]: the per-frame detection pipeline (geolocate, filter, boost, NMS).
//! - [`tracking`]: greedy GPS-space tracker with reidentification.
//! - [`anomaly`]: heatmap projection and accumulation into an anomaly grid.
//! - [`fusion`]: multi-stream map merging and cooperative boosting.
//! - [`sim`], [`eval`], [`bench`]: deterministic scenario simulator, metrics,
//!   and throughput measurement backing the CLI harness.
//! - [`config`], [`io`]: run configuration and the on-disk file formats.

pub mod anomaly;
pub mod bench;
pub mod camera;
pub mod config;
pub mod eval;
pub mod fusion;
pub mod geodesy;
pub mod io;
pub mod map;
pub mod sim;
pub mod size_filter;
pub mod tracking;
pub mod vod;

pub use camera::{CameraState, GroundOffset, PixelOffset, ProjectedPixel, ProjectionError};
pub use config::Config;
pub use geodesy::{GeoError, GeoPoint, NorthOffset};
pub use map::{MapError, MapSpec, MemoryMap};
pub use vod::{Detection, FrameResult, GeoDetection, GeoStatus, PipelineError, VodPipeline};
