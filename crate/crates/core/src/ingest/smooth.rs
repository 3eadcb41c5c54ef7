use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{split_logs, DriverLogRecord, IngestError};
use crate::math;

/// Default smoothing window: one second at 25 Hz.
pub const DEFAULT_SPAN: usize = 25;

/// Local linear regression smoother with tricube weights.
///
/// For sample `i` the window covers `i - h ..= i + h` (`h = (span - 1) / 2`),
/// truncated at the series ends. Weights are `(1 - (|j - i| / (h + 1))^3)^3`,
/// so every sample inside the window carries positive weight.
pub fn smooth_series(values: &[f64], span: usize) -> Result<Vec<f64>, IngestError> {
    let len = values.len();
    if span.is_multiple_of(2) || span < 3 || span > len {
        return Err(IngestError::Span { span, len });
    }
    let half = (span - 1) / 2;
    let norm = (half + 1) as f64;
    let weights: Vec<f64> = (0..=half)
        .map(|d| {
            let u = d as f64 / norm;
            let t = 1.0 - u * u * u;
            t * t * t
        })
        .collect();

    let mut out = Vec::with_capacity(len);
    for i in 0..len {
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(len - 1);
        let (mut sw, mut swx, mut swy) = (0.0, 0.0, 0.0);
        for (j, &y) in values.iter().enumerate().take(hi + 1).skip(lo) {
            let x = j as f64 - i as f64;
            let w = weights[i.abs_diff(j)];
            sw += w;
            swx += w * x;
            swy += w * y;
        }
        let x_mean = swx / sw;
        let y_mean = swy / sw;
        let (mut sxx, mut sxy) = (0.0, 0.0);
        for (j, &y) in values.iter().enumerate().take(hi + 1).skip(lo) {
            let dx = j as f64 - i as f64 - x_mean;
            let w = weights[i.abs_diff(j)];
            sxx += w * dx * dx;
            sxy += w * dx * (y - y_mean);
        }
        let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        out.push(y_mean - slope * x_mean);
    }
    Ok(out)
}

/// Continuous host channels that [`smooth_log`] can filter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Ax,
    Ay,
    Steer,
    Brake,
    Throttle,
    Vx,
    Vy,
}

impl Channel {
    pub const ALL: [Channel; 7] = [
        Channel::Ax,
        Channel::Ay,
        Channel::Steer,
        Channel::Brake,
        Channel::Throttle,
        Channel::Vx,
        Channel::Vy,
    ];

    fn get(self, r: &DriverLogRecord) -> f64 {
        match self {
            Channel::Ax => r.ax,
            Channel::Ay => r.ay,
            Channel::Steer => r.steer,
            Channel::Brake => r.brake,
            Channel::Throttle => r.throttle,
            Channel::Vx => r.vx,
            Channel::Vy => r.vy,
        }
    }

    fn set(self, r: &mut DriverLogRecord, v: f64) {
        match self {
            Channel::Ax => r.ax = v,
            Channel::Ay => r.ay = v,
            Channel::Steer => r.steer = v,
            // pedal signals stay inside their physical range
            Channel::Brake => r.brake = math::clamp(v, 0.0, 1.0),
            Channel::Throttle => r.throttle = math::clamp(v, 0.0, 1.0),
            Channel::Vx => r.vx = v,
            Channel::Vy => r.vy = v,
        }
    }
}

/// Smooths the selected channels of every log (per `log_id` run).
pub fn smooth_log(
    records: &[DriverLogRecord],
    span: usize,
    channels: &[Channel],
) -> Result<Vec<DriverLogRecord>, IngestError> {
    let mut out = Vec::with_capacity(records.len());
    for log in split_logs(records) {
        let mut smoothed = log.to_vec();
        for &ch in channels {
            let series: Vec<f64> = log.iter().map(|r| ch.get(r)).collect();
            let filtered = smooth_series(&series, span)?;
            for (r, v) in smoothed.iter_mut().zip(filtered) {
                ch.set(r, v);
            }
        }
        out.extend(smoothed);
    }
    Ok(out)
}
