//! Host-centric bird's-eye frames, interactive scene extraction and the
//! lane-changing-vehicle feature vector.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{split_logs, DriverLogRecord, TrackObservation};
use crate::labels::OpFeature;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("invalid parameter: {0}")]
    Parameter(&'static str),
    #[error("frame unusable: {0}")]
    UnusableFrame(&'static str),
    #[error("scene {scene}: lane-change track {track} not visible at the anchor frame")]
    MissingTrack { scene: String, track: u32 },
}

/// Lane boundaries in the host frame.
///
/// Built from detected lane lines: the pair bracketing the host defines lane
/// 2, outer lines (or one lane width when not detected) bound lanes 1 and 3.
/// Lanes are left-closed intervals, numbered 1..=3 left to right.
#[derive(Clone, Debug, PartialEq)]
pub struct LaneGeometry {
    offsets: Vec<f64>,
    bounds: [f64; 4],
}

impl LaneGeometry {
    /// Returns `None` when fewer than two lines are detected or no pair of
    /// lines brackets the host.
    pub fn from_offsets(offsets: &[f64]) -> Option<Self> {
        if offsets.len() < 2 || offsets.windows(2).any(|w| !(w[0] < w[1])) {
            return None;
        }
        let right_idx = offsets.iter().position(|&x| x > 0.0)?;
        if right_idx == 0 {
            return None;
        }
        let left = offsets[right_idx - 1];
        let right = offsets[right_idx];
        let width = right - left;
        let outer_left = if right_idx >= 2 {
            offsets[right_idx - 2]
        } else {
            left - width
        };
        let outer_right = offsets.get(right_idx + 1).copied().unwrap_or(right + width);
        Some(Self {
            offsets: offsets.to_vec(),
            bounds: [outer_left, left, right, outer_right],
        })
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    /// Lane boundaries `[left edge, lane1|lane2, lane2|lane3, right edge]`.
    pub fn bounds(&self) -> [f64; 4] {
        self.bounds
    }

    pub fn lane_of(&self, dx: f64) -> Option<u8> {
        let b = &self.bounds;
        if dx < b[0] || dx >= b[3] {
            None
        } else if dx < b[1] {
            Some(1)
        } else if dx < b[2] {
            Some(2)
        } else {
            Some(3)
        }
    }
}

/// A surrounding vehicle with its derived lane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanedTrack {
    #[serde(flatten)]
    pub obs: TrackObservation,
    pub lane: u8,
}

/// Host-centric snapshot: host at the origin, forward tracks with lanes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneFrame {
    #[serde(default)]
    pub log_id: u32,
    pub t: f64,
    pub host_speed: f64,
    pub host_ax: f64,
    pub host_ay: f64,
    pub host_steer: f64,
    pub host_brake: f64,
    pub host_throttle: f64,
    pub lane_offsets: Vec<f64>,
    pub tracks: Vec<LanedTrack>,
}

impl SceneFrame {
    pub fn track(&self, id: u32) -> Option<&LanedTrack> {
        self.tracks.iter().find(|t| t.obs.track_id == id)
    }

    pub fn lane_index_of(&self, id: u32) -> Option<u8> {
        self.track(id).map(|t| t.lane)
    }

    pub fn op_feature(&self) -> OpFeature {
        OpFeature {
            ax: self.host_ax,
            ay: self.host_ay,
            steer: self.host_steer,
            brake: self.host_brake,
            throttle: self.host_throttle,
        }
    }
}

/// Why tracks were dropped while building a frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FrameDrops {
    pub behind: usize,
    pub beyond_range: usize,
    pub outside_lanes: usize,
}

/// Forward range covered by a frame (m).
pub const FORWARD_RANGE: f64 = 100.0;

/// Converts a log record into a bird's-eye frame.
///
/// Tracks behind the host (`dy < 0`), at or beyond 100 m, or outside the
/// three lanes are dropped; the returned [`FrameDrops`] attributes each drop
/// to one rule.
pub fn to_birds_eye(record: &DriverLogRecord) -> Result<(SceneFrame, FrameDrops), SceneError> {
    let geometry = LaneGeometry::from_offsets(&record.lane_offsets).ok_or(
        SceneError::UnusableFrame("fewer than two lane lines around the host"),
    )?;
    let mut drops = FrameDrops::default();
    let mut tracks = Vec::with_capacity(record.tracks.len());
    for obs in &record.tracks {
        if obs.dy < 0.0 {
            drops.behind += 1;
        } else if obs.dy >= FORWARD_RANGE {
            drops.beyond_range += 1;
        } else if let Some(lane) = geometry.lane_of(obs.dx) {
            tracks.push(LanedTrack {
                obs: obs.clone(),
                lane,
            });
        } else {
            drops.outside_lanes += 1;
        }
    }
    tracks.sort_by_key(|t| t.obs.track_id);
    Ok((
        SceneFrame {
            log_id: record.log_id,
            t: record.timestamp,
            host_speed: record.vx,
            host_ax: record.ax,
            host_ay: record.ay,
            host_steer: record.steer,
            host_brake: record.brake,
            host_throttle: record.throttle,
            lane_offsets: record.lane_offsets.clone(),
            tracks,
        },
        drops,
    ))
}

/// Converts every usable record; unusable frames are skipped and counted.
pub fn frames_from_log(records: &[DriverLogRecord]) -> (Vec<SceneFrame>, usize) {
    let mut unusable = 0;
    let frames = records
        .iter()
        .filter_map(|r| match to_birds_eye(r) {
            Ok((f, _)) => Some(f),
            Err(_) => {
                unusable += 1;
                None
            }
        })
        .collect();
    (frames, unusable)
}

/// Host position in the world frame: `x` lateral, `y` longitudinal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldPoint {
    pub x: f64,
    pub y: f64,
}

/// Trapezoidal integration of host velocity into a world trajectory.
/// `vx` is the longitudinal speed (world `y`), `vy` the lateral speed.
pub fn integrate_trajectory(
    vx: &[f64],
    vy: &[f64],
    dt: f64,
) -> Result<Vec<WorldPoint>, SceneError> {
    if vx.is_empty() {
        return Err(SceneError::Parameter("empty velocity sequence"));
    }
    if vx.len() != vy.len() {
        return Err(SceneError::Parameter("velocity sequences differ in length"));
    }
    if !(dt > 0.0) {
        return Err(SceneError::Parameter("dt must be positive"));
    }
    let mut out = Vec::with_capacity(vx.len());
    let mut p = WorldPoint { x: 0.0, y: 0.0 };
    out.push(p);
    for i in 1..vx.len() {
        p.y += 0.5 * (vx[i - 1] + vx[i]) * dt;
        p.x += 0.5 * (vy[i - 1] + vy[i]) * dt;
        out.push(p);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractParams {
    /// Frames per scene window; windows are non-overlapping.
    pub window: usize,
    /// Maximum |steer| for the host to count as driving straight (rad).
    pub straight_tol: f64,
    /// Response horizon after the anchor frame (s).
    pub horizon: f64,
    /// Consecutive frames a lane change must persist.
    pub persist: usize,
    /// Surrounding vehicles required at the anchor frame.
    pub min_vehicles: usize,
}

impl Default for ExtractParams {
    fn default() -> Self {
        Self {
            window: 50,
            straight_tol: 0.02,
            horizon: 1.5,
            persist: 5,
            min_vehicles: 2,
        }
    }
}

/// An interactive scene: a window of frames around a lane change.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub scene_ref: String,
    pub log_id: u32,
    /// Index of the window's first frame within its log.
    pub window_start: usize,
    pub frames: Vec<SceneFrame>,
    /// Index into `frames` of the representative frame.
    pub anchor: usize,
    pub lane_change_track: u32,
    /// Minimum host ax over the response horizon (m/s²).
    pub response_ax: f64,
    /// Host operation signals at the frame where `response_ax` occurs.
    pub response: OpFeature,
}

impl Scene {
    pub fn anchor_frame(&self) -> &SceneFrame {
        &self.frames[self.anchor]
    }

    /// Independent re-check of the three extraction criteria.
    pub fn satisfies_criteria(&self, params: &ExtractParams) -> bool {
        let straight = self
            .frames
            .iter()
            .all(|f| f.host_steer.abs() < params.straight_tol);
        let crowded = self
            .frames
            .get(self.anchor)
            .is_some_and(|f| f.tracks.len() >= params.min_vehicles);
        let first = self
            .frames
            .iter()
            .find_map(|f| f.lane_index_of(self.lane_change_track));
        let changed = self
            .frames
            .get(self.anchor)
            .and_then(|f| f.lane_index_of(self.lane_change_track))
            .zip(first)
            .is_some_and(|(at_anchor, initial)| at_anchor != initial);
        straight && crowded && changed && self.response_ax.is_finite()
    }
}

/// First frame (and track) at which some track leaves its window-initial lane
/// for at least `persist` consecutive frames. Ties go to the smaller id.
fn detect_lane_change(frames: &[SceneFrame], persist: usize) -> Option<(usize, u32)> {
    let mut ids: Vec<u32> = frames
        .iter()
        .flat_map(|f| f.tracks.iter().map(|t| t.obs.track_id))
        .collect();
    ids.sort_unstable();
    ids.dedup();
    let mut best: Option<(usize, u32)> = None;
    for id in ids {
        let lanes: Vec<Option<u8>> = frames.iter().map(|f| f.lane_index_of(id)).collect();
        let Some(initial) = lanes.iter().flatten().next().copied() else {
            continue;
        };
        let mut run = 0;
        for (i, lane) in lanes.iter().enumerate() {
            match lane {
                Some(l) if *l != initial => {
                    run += 1;
                    if run >= persist.max(1) {
                        let start = i + 1 - run;
                        if best.is_none_or(|(b, _)| start < b) {
                            best = Some((start, id));
                        }
                        break;
                    }
                }
                _ => run = 0,
            }
        }
    }
    best
}

/// Extracts non-overlapping scenes (stride = window) from frames of one or
/// more logs. Windows restart at each log boundary; a trailing partial window
/// is ignored.
pub fn extract_scenes(
    frames: &[SceneFrame],
    params: &ExtractParams,
) -> Result<Vec<Scene>, SceneError> {
    if params.window < 2 {
        return Err(SceneError::Parameter("window must be at least 2 frames"));
    }
    let mut scenes = Vec::new();
    let mut start = 0;
    while start < frames.len() {
        let log_id = frames[start].log_id;
        let end = frames[start..]
            .iter()
            .position(|f| f.log_id != log_id)
            .map_or(frames.len(), |p| start + p);
        extract_from_log(&frames[start..end], params, &mut scenes);
        start = end;
    }
    Ok(scenes)
}

fn extract_from_log(log: &[SceneFrame], params: &ExtractParams, out: &mut Vec<Scene>) {
    let w = params.window;
    for (window_index, window_start) in (0..log.len()).step_by(w).enumerate() {
        let window_end = window_start + w;
        if window_end > log.len() {
            break;
        }
        let window = &log[window_start..window_end];
        if !window
            .iter()
            .all(|f| f.host_steer.abs() < params.straight_tol)
        {
            continue;
        }
        let Some((anchor, track)) = detect_lane_change(window, params.persist) else {
            continue;
        };
        if window[anchor].tracks.len() < params.min_vehicles {
            continue;
        }
        let t_anchor = window[anchor].t;
        // first frame attaining the minimum ax within the horizon
        let response_frame = log[window_start + anchor..]
            .iter()
            .take_while(|f| f.t <= t_anchor + params.horizon + 1e-9)
            .fold(None::<&SceneFrame>, |best, f| match best {
                Some(b) if b.host_ax <= f.host_ax => best,
                _ => Some(f),
            })
            .expect("anchor frame is inside the horizon");
        out.push(Scene {
            scene_ref: format!("{}:{}", window[0].log_id, window_index),
            log_id: window[0].log_id,
            window_start,
            frames: window.to_vec(),
            anchor,
            lane_change_track: track,
            response_ax: response_frame.host_ax,
            response: response_frame.op_feature(),
        });
    }
}

/// Convenience: records of many logs to scenes.
pub fn scenes_from_records(
    records: &[DriverLogRecord],
    params: &ExtractParams,
) -> Result<Vec<Scene>, SceneError> {
    let mut scenes = Vec::new();
    for log in split_logs(records) {
        let (frames, _) = frames_from_log(log);
        scenes.extend(extract_scenes(&frames, params)?);
    }
    Ok(scenes)
}

/// Relative state of the lane-changing vehicle at the anchor frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VrmFeature {
    pub dx: f64,
    pub dy: f64,
    pub dvx: f64,
    pub dvy: f64,
}

impl VrmFeature {
    pub fn to_array(self) -> [f64; 4] {
        [self.dx, self.dy, self.dvx, self.dvy]
    }
}

pub fn vrm_feature(scene: &Scene) -> Result<VrmFeature, SceneError> {
    let track = scene
        .frames
        .get(scene.anchor)
        .and_then(|f| f.track(scene.lane_change_track))
        .ok_or_else(|| SceneError::MissingTrack {
            scene: scene.scene_ref.clone(),
            track: scene.lane_change_track,
        })?;
    let o = &track.obs;
    Ok(VrmFeature {
        dx: o.dx,
        dy: o.dy,
        dvx: o.dvx,
        dvy: o.dvy,
    })
}
