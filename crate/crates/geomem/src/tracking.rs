//! GPS-space multi-object tracking with long-horizon reidentification.
//!
//! Tracks live in world coordinates: each frame, boosted detections above a
//! confidence threshold are matched to existing tracks by ground distance,
//! globally greedy by ascending distance so no detection ever feeds two
//! tracks. Because positions are GPS rather than pixels, camera motion —
//! including aggressive heading changes — does not move tracks at all, and a
//! track lost to occlusion can be reidentified by position alone for a
//! configurable horizon.
//!
//! A pixel-space nearest-neighbor baseline with the same greedy mechanics is
//! included for comparison; it demonstrates the id churn that camera rotation
//! inflicts on image-space trackers.
//!
//! One tracker may serve several camera streams: in cooperative mode the
//! track-id namespace is shared, per-stream association runs sequentially,
//! and aging is resolved once per frame group, which is what lets a track
//! matched by any stream survive occlusion in another.

use crate::geodesy::{self, GeoPoint};
use crate::vod::{Detection, GeoDetection};
use std::collections::BTreeSet;

/// Tracker parameters.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    /// Minimum boosted confidence for a detection to join matching.
    pub conf_threshold: f64,
    /// Maximum ground distance for track-detection association, meters.
    pub max_dist_m: f64,
    /// Minimum boosted confidence to start a brand-new track.
    pub birth_threshold: f64,
    /// How many frames a lost track stays eligible for reidentification.
    pub reid_horizon_frames: u64,
    /// Maximum ground distance for a lost track to reclaim a newborn, meters.
    pub reid_dist_m: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            conf_threshold: 0.5,
            max_dist_m: 5.0,
            birth_threshold: 0.6,
            reid_horizon_frames: 900, // 30 s at 30 FPS
            reid_dist_m: 10.0,
        }
    }
}

/// Track lifecycle: active this frame, or lost for a counted number of
/// frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum TrackState {
    Active,
    Lost { age_frames: u64 },
}

/// One tracked object.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Track {
    /// Stable id, never reused within a run.
    pub track_id: u64,
    pub class_id: u32,
    pub last_position: GeoPoint,
    pub last_box: Detection,
    pub last_seen_frame: u64,
    pub state: TrackState,
    /// (frame_id, position) samples at each sighting.
    pub history: Vec<(u64, GeoPoint)>,
}

/// One detection-to-track binding produced by a tracker step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub stream: usize,
    pub det_index: usize,
    pub track_id: u64,
}

/// GPS-space tracker.
#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    tracks: Vec<Track>,
    next_id: u64,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Self {
        Tracker { config, tracks: Vec::new(), next_id: 0 }
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    /// All tracks, ascending id.
    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    /// Single-stream step: associate, birth, reidentify, then age.
    pub fn step(&mut self, frame_id: u64, dets: &[GeoDetection]) -> Vec<(usize, u64)> {
        self.step_group(frame_id, &[(0, dets)])
            .into_iter()
            .map(|a| (a.det_index, a.track_id))
            .collect()
    }

    /// Multi-stream step: streams are associated sequentially in the given
    /// order against the shared track set, so an id claimed via one stream is
    /// immediately visible to the next. Aging and pruning happen once for the
    /// whole group: a track matched by any stream stays Active.
    pub fn step_group(
        &mut self,
        frame_id: u64,
        streams: &[(usize, &[GeoDetection])],
    ) -> Vec<Assignment> {
        let mut matched_ids: BTreeSet<u64> = BTreeSet::new();
        let mut assignments = Vec::new();
        for &(stream, dets) in streams {
            for (det_index, track_id) in self.associate_stream(frame_id, dets) {
                matched_ids.insert(track_id);
                assignments.push(Assignment { stream, det_index, track_id });
            }
        }
        for track in &mut self.tracks {
            if !matched_ids.contains(&track.track_id) {
                track.state = match track.state {
                    TrackState::Active => TrackState::Lost { age_frames: 1 },
                    TrackState::Lost { age_frames } => {
                        TrackState::Lost { age_frames: age_frames + 1 }
                    }
                };
            }
        }
        let horizon = self.config.reid_horizon_frames;
        self.tracks.retain(|t| match t.state {
            TrackState::Active => true,
            TrackState::Lost { age_frames } => age_frames <= horizon,
        });
        assignments
    }

    /// Greedy association of one stream's detections, then births, then
    /// reidentification of lost tracks against this frame's newborns.
    fn associate_stream(&mut self, frame_id: u64, dets: &[GeoDetection]) -> Vec<(usize, u64)> {
        let candidates: Vec<usize> = dets
            .iter()
            .enumerate()
            .filter(|(_, gd)| {
                gd.is_located() && gd.boosted_confidence >= self.config.conf_threshold
            })
            .map(|(i, _)| i)
            .collect();

        // All in-range (track, candidate) pairs, ascending by distance with
        // deterministic tie-breaks: lower track_id, then lower det index.
        let mut pairs: Vec<(f64, u64, usize)> = Vec::new();
        for track in self.tracks.iter().filter(|t| self.eligible(t)) {
            for &di in &candidates {
                let gd = &dets[di];
                if gd.detection.class_id != track.class_id {
                    continue;
                }
                let Some(dist) = ground_distance(track.last_position, gd.position().unwrap())
                else {
                    continue;
                };
                if dist <= self.config.max_dist_m {
                    pairs.push((dist, track.track_id, di));
                }
            }
        }
        pairs.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .expect("finite distances")
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });

        let mut used_tracks: BTreeSet<u64> = BTreeSet::new();
        let mut used_dets: BTreeSet<usize> = BTreeSet::new();
        let mut out: Vec<(usize, u64)> = Vec::new();
        for (_, track_id, di) in pairs {
            if used_tracks.contains(&track_id) || used_dets.contains(&di) {
                continue;
            }
            used_tracks.insert(track_id);
            used_dets.insert(di);
            self.track_mut(track_id).update(frame_id, &dets[di]);
            out.push((di, track_id));
        }

        // Births: unmatched candidates confident enough to found a track.
        let mut newborn_ids: Vec<u64> = Vec::new();
        for &di in &candidates {
            if used_dets.contains(&di) {
                continue;
            }
            let gd = &dets[di];
            if gd.boosted_confidence < self.config.birth_threshold {
                continue;
            }
            let track_id = self.next_id;
            self.next_id += 1;
            self.tracks.push(Track {
                track_id,
                class_id: gd.detection.class_id,
                last_position: gd.position().unwrap(),
                last_box: gd.detection,
                last_seen_frame: frame_id,
                state: TrackState::Active,
                history: vec![(frame_id, gd.position().unwrap())],
            });
            newborn_ids.push(track_id);
            out.push((di, track_id));
        }

        // Reidentification: lost tracks (ascending id) reclaim the nearest
        // unclaimed newborn within reid_dist_m; the newborn merges into the
        // old id, so the object keeps its identity across the gap.
        let lost_ids: Vec<u64> = self
            .tracks
            .iter()
            .filter(|t| {
                matches!(t.state, TrackState::Lost { .. })
                    && self.eligible(t)
                    && !used_tracks.contains(&t.track_id)
            })
            .map(|t| t.track_id)
            .collect();
        for lost_id in lost_ids {
            let lost = self.track(lost_id);
            let mut best: Option<(f64, u64)> = None;
            for &nb_id in &newborn_ids {
                let nb = self.track(nb_id);
                if nb.class_id != lost.class_id {
                    continue;
                }
                let Some(dist) = ground_distance(lost.last_position, nb.last_position) else {
                    continue;
                };
                if dist <= self.config.reid_dist_m
                    && best.map_or(true, |(bd, bid)| (dist, nb_id) < (bd, bid))
                {
                    best = Some((dist, nb_id));
                }
            }
            let Some((_, nb_id)) = best else { continue };
            let nb = self.track(nb_id).clone();
            self.tracks.retain(|t| t.track_id != nb_id);
            newborn_ids.retain(|&id| id != nb_id);
            let old = self.track_mut(lost_id);
            old.last_position = nb.last_position;
            old.last_box = nb.last_box;
            old.last_seen_frame = nb.last_seen_frame;
            old.state = TrackState::Active;
            old.history.push((nb.last_seen_frame, nb.last_position));
            for entry in &mut out {
                if entry.1 == nb_id {
                    entry.1 = lost_id;
                }
            }
        }

        out
    }

    /// Lost tracks beyond the reid horizon are never matched (and are pruned
    /// at the end of the group step).
    fn eligible(&self, track: &Track) -> bool {
        match track.state {
            TrackState::Active => true,
            TrackState::Lost { age_frames } => age_frames <= self.config.reid_horizon_frames,
        }
    }

    fn track(&self, id: u64) -> &Track {
        self.tracks
            .iter()
            .find(|t| t.track_id == id)
            .expect("track id known to exist")
    }

    fn track_mut(&mut self, id: u64) -> &mut Track {
        self.tracks
            .iter_mut()
            .find(|t| t.track_id == id)
            .expect("track id known to exist")
    }
}

impl Track {
    fn update(&mut self, frame_id: u64, gd: &GeoDetection) {
        self.last_position = gd.position().expect("matched detections are located");
        self.last_box = gd.detection;
        self.last_seen_frame = frame_id;
        self.state = TrackState::Active;
        self.history.push((frame_id, self.last_position));
    }
}

/// Ground distance between two GPS points; None only in polar edge cases.
fn ground_distance(a: GeoPoint, b: GeoPoint) -> Option<f64> {
    geodesy::gps_to_offset(a, b).ok().map(|off| off.norm_m())
}

/// Image-space nearest-neighbor baseline: identical greedy mechanics, but
/// distances are pixel distances between box centers and there is no
/// reidentification. Exists to quantify what GPS-space tracking buys.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PixelTrackerConfig {
    pub conf_threshold: f64,
    pub max_dist_px: f64,
    pub birth_threshold: f64,
}

impl Default for PixelTrackerConfig {
    fn default() -> Self {
        PixelTrackerConfig { conf_threshold: 0.5, max_dist_px: 150.0, birth_threshold: 0.6 }
    }
}

#[derive(Debug, Clone)]
struct PixelTrack {
    track_id: u64,
    class_id: u32,
    last_center: (f64, f64),
}

/// The baseline tracker. Deliberately minimal: what a naive image-space
/// tracker would do with the same detections.
#[derive(Debug, Clone)]
pub struct PixelTracker {
    config: PixelTrackerConfig,
    tracks: Vec<PixelTrack>,
    next_id: u64,
}

impl PixelTracker {
    pub fn new(config: PixelTrackerConfig) -> Self {
        PixelTracker { config, tracks: Vec::new(), next_id: 0 }
    }

    /// Associates detections by pixel distance; unmatched confident
    /// detections start new tracks. Returns (det_index, track_id) pairs.
    pub fn step(&mut self, dets: &[GeoDetection]) -> Vec<(usize, u64)> {
        let candidates: Vec<usize> = dets
            .iter()
            .enumerate()
            .filter(|(_, gd)| gd.boosted_confidence >= self.config.conf_threshold)
            .map(|(i, _)| i)
            .collect();
        let mut pairs: Vec<(f64, u64, usize)> = Vec::new();
        for (ti, track) in self.tracks.iter().enumerate() {
            for &di in &candidates {
                let gd = &dets[di];
                if gd.detection.class_id != track.class_id {
                    continue;
                }
                let (cx, cy) = gd.detection.center_px();
                let dist = (cx - track.last_center.0).hypot(cy - track.last_center.1);
                if dist <= self.config.max_dist_px {
                    pairs.push((dist, ti as u64, di));
                }
            }
        }
        pairs.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .expect("finite distances")
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        let mut used_tracks = BTreeSet::new();
        let mut used_dets = BTreeSet::new();
        let mut out = Vec::new();
        for (_, ti, di) in pairs {
            if used_tracks.contains(&ti) || used_dets.contains(&di) {
                continue;
            }
            used_tracks.insert(ti);
            used_dets.insert(di);
            let track = &mut self.tracks[ti as usize];
            track.last_center = dets[di].detection.center_px();
            out.push((di, track.track_id));
        }
        for &di in &candidates {
            if used_dets.contains(&di) || dets[di].boosted_confidence < self.config.birth_threshold
            {
                continue;
            }
            let track_id = self.next_id;
            self.next_id += 1;
            self.tracks.push(PixelTrack {
                track_id,
                class_id: dets[di].detection.class_id,
                last_center: dets[di].detection.center_px(),
            });
            out.push((di, track_id));
        }
        out
    }
}
