//! Driving-log records, signal smoothing and the synthetic log generator.

mod smooth;
pub mod synth;

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use smooth::{smooth_log, smooth_series, Channel, DEFAULT_SPAN};
pub use synth::{generate_synthetic, ScenarioSpec};

/// Nominal sampling interval of the logging platform (25 Hz).
pub const SAMPLE_INTERVAL: f64 = 0.04;
/// Rear sensing limit, metres behind the host.
pub const REAR_RANGE: f64 = -30.0;
/// Forward sensing limit, metres ahead of the host.
pub const FRONT_RANGE: f64 = 100.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("invalid parameter: {0}")]
    Parameter(&'static str),
    #[error(
        "smoothing span {span} invalid for series of length {len} (must be odd, 3 <= span <= len)"
    )]
    Span { span: usize, len: usize },
    #[error("infeasible scenario: {0}")]
    Spec(alloc::string::String),
    #[error("record {index}: {reason}")]
    InvalidRecord { index: usize, reason: &'static str },
}

/// One surrounding vehicle seen by the host sensors, in the host frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackObservation {
    pub track_id: u32,
    /// Lateral offset, rightward positive (m).
    pub dx: f64,
    /// Longitudinal offset, forward positive (m).
    pub dy: f64,
    /// Lateral relative velocity (m/s).
    pub dvx: f64,
    /// Longitudinal relative velocity (m/s).
    pub dvy: f64,
}

/// One 25 Hz sample of host CAN signals plus tracked vehicles.
///
/// `log_id` separates independent recordings stored in one file; records of
/// one log are contiguous and strictly increasing in `timestamp`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriverLogRecord {
    #[serde(default)]
    pub log_id: u32,
    pub timestamp: f64,
    pub ax: f64,
    pub ay: f64,
    pub steer: f64,
    pub brake: f64,
    pub throttle: f64,
    pub vx: f64,
    pub vy: f64,
    /// Detected lane-line lateral positions, sorted left to right (m).
    pub lane_offsets: Vec<f64>,
    pub tracks: Vec<TrackObservation>,
    pub cipv_id: Option<u32>,
}

impl DriverLogRecord {
    /// Checks the per-record invariants.
    pub fn validate(&self) -> Result<(), &'static str> {
        let scalars = [
            self.timestamp,
            self.ax,
            self.ay,
            self.steer,
            self.brake,
            self.throttle,
            self.vx,
            self.vy,
        ];
        if scalars.iter().any(|v| !v.is_finite()) {
            return Err("non-finite signal");
        }
        if !(0.0..=1.0).contains(&self.brake) {
            return Err("brake outside [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.throttle) {
            return Err("throttle outside [0, 1]");
        }
        if self.lane_offsets.iter().any(|v| !v.is_finite()) {
            return Err("non-finite lane offset");
        }
        if self.lane_offsets.windows(2).any(|w| w[0] >= w[1]) {
            return Err("lane offsets not strictly increasing");
        }
        let mut ids = BTreeSet::new();
        for t in &self.tracks {
            if ![t.dx, t.dy, t.dvx, t.dvy].iter().all(|v| v.is_finite()) {
                return Err("non-finite track value");
            }
            if !(REAR_RANGE..=FRONT_RANGE).contains(&t.dy) {
                return Err("track outside sensing range");
            }
            if !ids.insert(t.track_id) {
                return Err("duplicate track id");
            }
        }
        Ok(())
    }
}

/// Validates a whole log: per-record invariants and strictly increasing
/// timestamps within each `log_id` run.
pub fn validate_log(records: &[DriverLogRecord]) -> Result<(), IngestError> {
    for (index, r) in records.iter().enumerate() {
        r.validate()
            .map_err(|reason| IngestError::InvalidRecord { index, reason })?;
        if index > 0 {
            let prev = &records[index - 1];
            if prev.log_id == r.log_id && r.timestamp <= prev.timestamp {
                return Err(IngestError::InvalidRecord {
                    index,
                    reason: "timestamps not strictly increasing",
                });
            }
        }
    }
    Ok(())
}

/// Splits records into contiguous runs sharing a `log_id`.
pub fn split_logs(records: &[DriverLogRecord]) -> Vec<&[DriverLogRecord]> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=records.len() {
        if i == records.len() || records[i].log_id != records[start].log_id {
            if i > start {
                out.push(&records[start..i]);
            }
            start = i;
        }
    }
    out
}
