//! One configuration file for the whole toolkit.
//!
//! Every subsystem keeps its own typed parameter struct next to its code;
//! this module aggregates them into a single JSON document so a run can be
//! reproduced from one file. Every field has a default, and a config file
//! may set any subset — `{}` is a complete, valid configuration.

use crate::anomaly::AnomalyConfig;
use crate::fusion::{FusionConfig, OverlapMode};
use crate::size_filter::SizeFilterConfig;
use crate::tracking::{PixelTrackerConfig, TrackerConfig};
use crate::vod::VodConfig;
use std::fmt;

/// Errors reading or validating a configuration.
#[derive(Debug)]
pub enum ConfigError {
    /// The document is not valid JSON for the schema.
    Parse(String),
    /// A parameter value is out of range; the message names it.
    Invalid(String),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Parse(msg) => write!(f, "cannot parse config: {msg}"),
            ConfigError::Invalid(msg) => write!(f, "invalid config: {msg}"),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Top-level configuration. The detection pipeline's map spec lives inside
/// `vod`; the anomaly aggregator carries its own coarser map spec.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct Config {
    pub vod: VodConfig,
    pub tracker: TrackerConfig,
    pub pixel_tracker: PixelTrackerConfig,
    pub anomaly: AnomalyConfig,
    pub size_filter: SizeFilterConfig,
    /// Maximum timestamp gap when pairing fusion streams to stream 0.
    pub pairing_tolerance_us: i64,
    /// How fused maps combine overlapping cells.
    pub overlap: OverlapMode,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            vod: VodConfig::default(),
            tracker: TrackerConfig::default(),
            pixel_tracker: PixelTrackerConfig::default(),
            anomaly: AnomalyConfig::default(),
            size_filter: SizeFilterConfig::default(),
            pairing_tolerance_us: 50_000,
            overlap: OverlapMode::Mean,
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config =
            serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks cross-field invariants that serde cannot express.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.vod.map.grid_cells().map_err(|e| ConfigError::Invalid(format!("vod.map: {e}")))?;
        self.anomaly
            .map
            .grid_cells()
            .map_err(|e| ConfigError::Invalid(format!("anomaly.map: {e}")))?;
        self.size_filter
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("size_filter: {e}")))?;
        for (name, v) in [
            ("vod.iou_threshold", self.vod.iou_threshold),
            ("vod.confidence_threshold", self.vod.confidence_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(ConfigError::Invalid(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if self.tracker.max_dist_m <= 0.0 || !self.tracker.max_dist_m.is_finite() {
            return Err(ConfigError::Invalid(format!(
                "tracker.max_dist_m must be positive, got {}",
                self.tracker.max_dist_m
            )));
        }
        if self.tracker.reid_dist_m < 0.0 || !self.tracker.reid_dist_m.is_finite() {
            return Err(ConfigError::Invalid(format!(
                "tracker.reid_dist_m must be non-negative, got {}",
                self.tracker.reid_dist_m
            )));
        }
        if self.pixel_tracker.max_dist_px <= 0.0 || !self.pixel_tracker.max_dist_px.is_finite() {
            return Err(ConfigError::Invalid(format!(
                "pixel_tracker.max_dist_px must be positive, got {}",
                self.pixel_tracker.max_dist_px
            )));
        }
        if self.anomaly.max_range_m <= 0.0 || !self.anomaly.max_range_m.is_finite() {
            return Err(ConfigError::Invalid(format!(
                "anomaly.max_range_m must be positive, got {}",
                self.anomaly.max_range_m
            )));
        }
        if self.pairing_tolerance_us < 0 {
            return Err(ConfigError::Invalid(format!(
                "pairing_tolerance_us must be non-negative, got {}",
                self.pairing_tolerance_us
            )));
        }
        Ok(())
    }

    /// The fusion runner's parameter view of this configuration.
    pub fn fusion_config(&self) -> FusionConfig {
        FusionConfig {
            vod: self.vod.clone(),
            tracker: self.tracker.clone(),
            pairing_tolerance_us: self.pairing_tolerance_us,
            overlap: self.overlap,
        }
    }
}
