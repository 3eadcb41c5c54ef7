//! Deterministic synthetic driving logs.
//!
//! A [`ScenarioSpec`] scripts surrounding vehicles on a straight three-lane
//! road (free flow, cut-ins, braking leads) around a host that drives in the
//! centre lane. The host's longitudinal acceleration follows a first-order lag
//! toward a target set by the [`ResponseRule`]: perceived severity is the
//! in-path proximity threat multiplied by how boxed-in the host is, so the
//! driver's braking depends on vehicles other than the one cutting in.
//!
//! [`SuiteSpec`] draws many short single-cut-in episodes with a known
//! severity class; it is the stand-in for a naturalistic driving corpus.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{
    DriverLogRecord, IngestError, TrackObservation, FRONT_RANGE, REAR_RANGE, SAMPLE_INTERVAL,
};
use crate::math;
use crate::rng::{self, SeededRng};
use crate::scenes::LaneGeometry;

/// Number of lanes the generator (and the occupancy grid) supports.
pub const LANES: u8 = 3;
/// Lane the host drives in.
pub const HOST_LANE: u8 = 2;
/// Minimum longitudinal spacing between two vehicles spawned in one lane.
pub const MIN_SPAWN_GAP: f64 = 5.0;

fn default_dt() -> f64 {
    SAMPLE_INTERVAL
}
fn default_lanes() -> u8 {
    LANES
}
fn default_lane_width() -> f64 {
    3.5
}
fn default_host_speed() -> f64 {
    15.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Maneuver {
    /// Keeps its lane and relative speed.
    FreeFlow,
    /// Moves laterally into `to_lane` with a half-cosine profile.
    CutIn {
        start: f64,
        to_lane: u8,
        duration: f64,
    },
    /// Relative speed drops at `decel` m/s² for `duration` seconds.
    BrakingLead {
        start: f64,
        decel: f64,
        duration: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleScript {
    pub id: u32,
    pub lane: u8,
    /// Initial longitudinal offset from the host (m).
    pub dy: f64,
    /// Initial longitudinal speed relative to the host (m/s).
    #[serde(default)]
    pub rel_speed: f64,
    #[serde(default = "free_flow")]
    pub maneuver: Maneuver,
}

fn free_flow() -> Maneuver {
    Maneuver::FreeFlow
}

/// Maps the scene around the host to a target longitudinal acceleration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ResponseRule {
    /// Deceleration per unit severity (m/s²).
    pub gain: f64,
    /// Time constant of the first-order lag (s).
    pub time_constant: f64,
    /// In-path vehicles closer than this pose a threat (m).
    pub threat_distance: f64,
    /// Adjacent-lane vehicles closer than this block an escape (m).
    pub block_distance: f64,
    /// Severity multiplier added per blocking vehicle.
    pub block_weight: f64,
    /// Acceleration when no threat is present (m/s²).
    pub free_accel: f64,
    pub max_decel: f64,
}

impl Default for ResponseRule {
    fn default() -> Self {
        Self {
            gain: 3.5,
            time_constant: 0.3,
            threat_distance: 30.0,
            block_distance: 15.0,
            block_weight: 1.0,
            free_accel: 0.2,
            max_decel: 8.0,
        }
    }
}

impl ResponseRule {
    /// Perceived severity of a frame: `threat * (1 + block_weight * blocked)`
    /// where `threat = max(1 - dy / threat_distance)` over in-path vehicles
    /// ahead and `blocked` counts adjacent-lane vehicles ahead within
    /// `block_distance`.
    pub fn severity(&self, geometry: &LaneGeometry, tracks: &[TrackObservation]) -> f64 {
        let mut threat: f64 = 0.0;
        let mut blocked = 0usize;
        for t in tracks {
            if t.dy < 0.0 {
                continue;
            }
            match geometry.lane_of(t.dx) {
                Some(HOST_LANE) if t.dy < self.threat_distance => {
                    threat = threat.max(1.0 - t.dy / self.threat_distance);
                }
                Some(lane) if lane != HOST_LANE && t.dy < self.block_distance => blocked += 1,
                _ => {}
            }
        }
        threat * (1.0 + self.block_weight * blocked as f64)
    }

    pub fn target_accel(&self, severity: f64) -> f64 {
        if severity > 0.0 {
            -(self.gain * severity).min(self.max_decel)
        } else {
            self.free_accel
        }
    }

    /// Exact discretisation of the first-order lag over one step.
    pub fn step(&self, current: f64, target: f64, dt: f64) -> f64 {
        target + (current - target) * math::exp(-dt / self.time_constant)
    }
}

/// Standard deviations of additive sensor noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub ax: f64,
    pub ay: f64,
    pub steer: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            ax: 0.05,
            ay: 0.05,
            steer: 0.002,
        }
    }
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            ax: 0.0,
            ay: 0.0,
            steer: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    /// Log length (s).
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_lanes")]
    pub lanes: u8,
    #[serde(default = "default_lane_width")]
    pub lane_width: f64,
    /// Initial host speed (m/s).
    #[serde(default = "default_host_speed")]
    pub host_speed: f64,
    /// Constant host front-wheel angle (rad).
    #[serde(default)]
    pub host_steer: f64,
    #[serde(default)]
    pub vehicles: Vec<VehicleScript>,
    #[serde(default)]
    pub response: ResponseRule,
    #[serde(default)]
    pub noise: NoiseSpec,
}

impl ScenarioSpec {
    pub fn sample_count(&self) -> usize {
        math::round(self.duration / self.dt) as usize
    }

    /// Lateral centre of a lane in the host frame.
    pub fn lane_center(&self, lane: u8) -> f64 {
        (lane as f64 - HOST_LANE as f64) * self.lane_width
    }

    pub fn lane_geometry(&self) -> LaneGeometry {
        let w = self.lane_width;
        LaneGeometry::from_offsets(&[-1.5 * w, -0.5 * w, 0.5 * w, 1.5 * w])
            .expect("four ordered lane lines")
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let err = |m: alloc::string::String| Err(IngestError::Spec(m));
        if !(self.duration > 0.0 && self.dt > 0.0) {
            return err("duration and dt must be positive".into());
        }
        if self.sample_count() < 2 {
            return err("scenario shorter than two samples".into());
        }
        if self.lanes != LANES {
            return err(format!("lane count must be {LANES}, got {}", self.lanes));
        }
        if !(self.lane_width > 0.0) || !(self.host_speed >= 0.0) {
            return err("lane width must be positive and host speed non-negative".into());
        }
        if !(self.response.time_constant > 0.0) || !(self.response.threat_distance > 0.0) {
            return err("response time constant and threat distance must be positive".into());
        }
        for (i, v) in self.vehicles.iter().enumerate() {
            if !(1..=LANES).contains(&v.lane) {
                return err(format!(
                    "vehicle {} starts outside the {LANES} lanes (lane {})",
                    v.id, v.lane
                ));
            }
            if !(REAR_RANGE..=FRONT_RANGE).contains(&v.dy) {
                return err(format!(
                    "vehicle {} spawns outside sensing range (dy {})",
                    v.id, v.dy
                ));
            }
            if v.lane == HOST_LANE && math::abs(v.dy) < MIN_SPAWN_GAP {
                return err(format!("vehicle {} overlaps the host at spawn", v.id));
            }
            match v.maneuver {
                Maneuver::CutIn {
                    to_lane, duration, ..
                } => {
                    if !(1..=LANES).contains(&to_lane) || to_lane.abs_diff(v.lane) != 1 {
                        return err(format!(
                            "vehicle {} cut-in target lane {to_lane} is not adjacent",
                            v.id
                        ));
                    }
                    if !(duration > 0.0) {
                        return err(format!("vehicle {} cut-in duration must be positive", v.id));
                    }
                }
                Maneuver::BrakingLead {
                    decel, duration, ..
                } => {
                    if !(decel >= 0.0 && duration >= 0.0) {
                        return err(format!(
                            "vehicle {} braking parameters must be non-negative",
                            v.id
                        ));
                    }
                }
                Maneuver::FreeFlow => {}
            }
            for w in &self.vehicles[..i] {
                if w.id == v.id {
                    return err(format!("duplicate vehicle id {}", v.id));
                }
                if w.lane == v.lane && math::abs(w.dy - v.dy) < MIN_SPAWN_GAP {
                    return err(format!("vehicles {} and {} overlap at spawn", w.id, v.id));
                }
            }
        }
        Ok(())
    }
}

impl VehicleScript {
    fn rel_speed_at(&self, t: f64) -> f64 {
        match self.maneuver {
            Maneuver::BrakingLead {
                start,
                decel,
                duration,
            } => self.rel_speed - decel * math::clamp(t - start, 0.0, duration),
            _ => self.rel_speed,
        }
    }

    /// Lateral position and velocity at time `t`.
    fn lateral_at(&self, spec: &ScenarioSpec, t: f64) -> (f64, f64) {
        let from = spec.lane_center(self.lane);
        match self.maneuver {
            Maneuver::CutIn {
                start,
                to_lane,
                duration,
            } => {
                let to = spec.lane_center(to_lane);
                let s = math::clamp((t - start) / duration, 0.0, 1.0);
                let pi = core::f64::consts::PI;
                let x = from + (to - from) * 0.5 * (1.0 - math::cos(pi * s));
                let v = if s > 0.0 && s < 1.0 {
                    (to - from) * 0.5 * pi / duration * math::sin(pi * s)
                } else {
                    0.0
                };
                (x, v)
            }
            _ => (from, 0.0),
        }
    }
}

/// Generates a log for `spec`. Pure function of `(spec, seed)`.
pub fn generate_synthetic(
    spec: &ScenarioSpec,
    seed: u64,
) -> Result<Vec<DriverLogRecord>, IngestError> {
    spec.validate()?;
    let mut noise_rng: SeededRng = rng::seeded(seed, 0);
    let geometry = spec.lane_geometry();
    let lane_offsets = geometry.offsets().to_vec();
    let n = spec.sample_count();
    let rule = &spec.response;

    let mut dys: Vec<f64> = spec.vehicles.iter().map(|v| v.dy).collect();
    let mut order: Vec<usize> = (0..spec.vehicles.len()).collect();
    order.sort_by_key(|&i| spec.vehicles[i].id);

    let mut accel = rule.free_accel;
    let mut speed = spec.host_speed;
    let mut out = Vec::with_capacity(n);
    for step in 0..n {
        let t = step as f64 * spec.dt;
        let mut tracks = Vec::new();
        for &i in &order {
            let v = &spec.vehicles[i];
            if !(REAR_RANGE..=FRONT_RANGE).contains(&dys[i]) {
                continue;
            }
            let (dx, dvx) = v.lateral_at(spec, t);
            tracks.push(TrackObservation {
                track_id: v.id,
                dx,
                dy: dys[i],
                dvx,
                dvy: v.rel_speed_at(t),
            });
        }
        let cipv_id = tracks
            .iter()
            .filter(|t| t.dy >= 0.0 && geometry.lane_of(t.dx) == Some(HOST_LANE))
            .min_by(|a, b| a.dy.total_cmp(&b.dy))
            .map(|t| t.track_id);
        let severity = rule.severity(&geometry, &tracks);
        let target = rule.target_accel(severity);

        let ax = rng::normal(&mut noise_rng, accel, spec.noise.ax);
        let ay = rng::normal(&mut noise_rng, 0.0, spec.noise.ay);
        let steer = rng::normal(&mut noise_rng, spec.host_steer, spec.noise.steer);
        let (brake, throttle) = if accel < 0.0 {
            (math::clamp(-accel / 6.0, 0.0, 1.0), 0.0)
        } else {
            (0.0, math::clamp(0.15 + accel / 3.0, 0.0, 1.0))
        };
        out.push(DriverLogRecord {
            log_id: 0,
            timestamp: t,
            ax,
            ay,
            steer,
            brake,
            throttle,
            vx: speed,
            vy: 0.0,
            lane_offsets: lane_offsets.clone(),
            tracks,
            cipv_id,
        });

        // advance to the next sample
        let next_t = t + spec.dt;
        for (i, v) in spec.vehicles.iter().enumerate() {
            dys[i] += 0.5 * (v.rel_speed_at(t) + v.rel_speed_at(next_t)) * spec.dt;
        }
        speed = (speed + accel * spec.dt).max(0.0);
        accel = rule.step(accel, target, spec.dt);
    }
    Ok(out)
}

/// Either a single scenario or a suite of episodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthSpec {
    Scenario(ScenarioSpec),
    Suite(SuiteSpec),
}

impl SynthSpec {
    pub fn generate(&self, seed: u64) -> Result<Vec<DriverLogRecord>, IngestError> {
        match self {
            SynthSpec::Scenario(s) => generate_synthetic(s, seed),
            SynthSpec::Suite(s) => {
                let suite = SuiteSpec { seed, ..s.clone() };
                generate_suite_logs(&suite)
            }
        }
    }
}

/// Many short episodes, each containing exactly one cut-in into the host lane.
///
/// Severity class 0 is a distant, harmless cut-in; class `1 + b` is a close
/// cut-in with `b` adjacent-lane vehicles boxing the host in. The cut-in
/// vehicle's own state is drawn from the same distribution for every
/// dangerous class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteSpec {
    pub episodes: usize,
    pub seed: u64,
    pub episode_duration: f64,
    /// Time at which the cut-in vehicle crosses into the host lane (s).
    pub crossing_time: f64,
    pub cut_in_duration: f64,
    pub danger_gap: [f64; 2],
    pub safe_gap: [f64; 2],
    pub not_dangerous_fraction: f64,
    pub host_speed: [f64; 2],
    pub response: ResponseRule,
    pub noise: NoiseSpec,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        Self {
            episodes: 100,
            seed: 0,
            episode_duration: 5.0,
            crossing_time: 2.4,
            cut_in_duration: 1.5,
            danger_gap: [15.0, 18.0],
            safe_gap: [35.0, 60.0],
            not_dangerous_fraction: 0.4,
            host_speed: [12.0, 20.0],
            response: ResponseRule::default(),
            noise: NoiseSpec::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteEpisode {
    pub log_id: u32,
    pub seed: u64,
    pub severity_class: u8,
    pub spec: ScenarioSpec,
}

/// Draws the episode scripts of a suite.
pub fn generate_suite(suite: &SuiteSpec) -> Vec<SuiteEpisode> {
    (0..suite.episodes)
        .map(|index| {
            let mut r = rng::seeded(suite.seed, 1 + index as u64);
            let pick = |r: &mut SeededRng, range: [f64; 2]| rng::uniform(r, range[0], range[1]);
            let dangerous = rng::uniform(&mut r, 0.0, 1.0) >= suite.not_dangerous_fraction;
            let blockers = (rng::uniform(&mut r, 0.0, 3.0) as usize).min(2);
            let from_lane = if rng::uniform(&mut r, 0.0, 1.0) < 0.5 {
                1
            } else {
                3
            };
            let rel = rng::uniform(&mut r, -0.5, 0.5);
            let gap = if dangerous {
                pick(&mut r, suite.danger_gap)
            } else {
                pick(&mut r, suite.safe_gap)
            };
            let mut vehicles = vec![VehicleScript {
                id: 1,
                lane: from_lane,
                dy: gap - rel * suite.crossing_time,
                rel_speed: rel,
                maneuver: Maneuver::CutIn {
                    start: suite.crossing_time - 0.5 * suite.cut_in_duration,
                    to_lane: HOST_LANE,
                    duration: suite.cut_in_duration,
                },
            }];
            vehicles.push(VehicleScript {
                id: 2,
                lane: 4 - from_lane,
                dy: rng::uniform(&mut r, 45.0, 90.0),
                rel_speed: rng::uniform(&mut r, -1.0, 1.0),
                maneuver: Maneuver::FreeFlow,
            });
            let blocker_lanes: &[u8] = match blockers {
                0 => &[],
                1 => {
                    if rng::uniform(&mut r, 0.0, 1.0) < 0.5 {
                        &[1]
                    } else {
                        &[3]
                    }
                }
                _ => &[1, 3],
            };
            for (k, &lane) in blocker_lanes.iter().enumerate() {
                vehicles.push(VehicleScript {
                    id: 3 + k as u32,
                    lane,
                    dy: rng::uniform(&mut r, 1.0, 8.5),
                    rel_speed: 0.0,
                    maneuver: Maneuver::FreeFlow,
                });
            }
            let spec = ScenarioSpec {
                duration: suite.episode_duration,
                dt: SAMPLE_INTERVAL,
                lanes: LANES,
                lane_width: default_lane_width(),
                host_speed: pick(&mut r, suite.host_speed),
                host_steer: 0.0,
                vehicles,
                response: suite.response.clone(),
                noise: suite.noise.clone(),
            };
            SuiteEpisode {
                log_id: index as u32,
                seed: rng::splitmix64(suite.seed ^ rng::splitmix64(index as u64)),
                severity_class: if dangerous { 1 + blockers as u8 } else { 0 },
                spec,
            }
        })
        .collect()
}

/// Generates one log for an episode, tagged with its `log_id`.
pub fn generate_episode(episode: &SuiteEpisode) -> Result<Vec<DriverLogRecord>, IngestError> {
    let mut records = generate_synthetic(&episode.spec, episode.seed)?;
    for r in &mut records {
        r.log_id = episode.log_id;
    }
    Ok(records)
}

/// Generates every episode of a suite, concatenated in `log_id` order.
pub fn generate_suite_logs(suite: &SuiteSpec) -> Result<Vec<DriverLogRecord>, IngestError> {
    let mut out = Vec::new();
    for episode in generate_suite(suite) {
        out.extend(generate_episode(&episode)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cut_in_spec(gap: f64) -> ScenarioSpec {
        ScenarioSpec {
            duration: 4.0,
            dt: SAMPLE_INTERVAL,
            lanes: 3,
            lane_width: 3.5,
            host_speed: 15.0,
            host_steer: 0.0,
            vehicles: vec![
                VehicleScript {
                    id: 1,
                    lane: 3,
                    dy: gap,
                    rel_speed: 0.0,
                    maneuver: Maneuver::CutIn {
                        start: 1.0,
                        to_lane: 2,
                        duration: 1.0,
                    },
                },
                VehicleScript {
                    id: 2,
                    lane: 1,
                    dy: 70.0,
                    rel_speed: 0.0,
                    maneuver: Maneuver::FreeFlow,
                },
            ],
            response: ResponseRule::default(),
            noise: NoiseSpec::none(),
        }
    }

    #[test]
    fn empty_scene_has_no_tracks() {
        let spec = ScenarioSpec {
            vehicles: vec![],
            ..cut_in_spec(8.0)
        };
        let log = generate_synthetic(&spec, 3).unwrap();
        assert_eq!(log.len(), 100);
        assert!(log
            .iter()
            .all(|r| r.tracks.is_empty() && r.cipv_id.is_none()));
        crate::ingest::validate_log(&log).unwrap();
    }

    #[test]
    fn generation_is_deterministic() {
        let mut spec = cut_in_spec(8.0);
        spec.noise = NoiseSpec::default();
        assert_eq!(
            generate_synthetic(&spec, 11).unwrap(),
            generate_synthetic(&spec, 11).unwrap()
        );
        assert_ne!(
            generate_synthetic(&spec, 11).unwrap(),
            generate_synthetic(&spec, 12).unwrap()
        );
    }

    #[test]
    fn cut_in_changes_the_scripted_track_lane() {
        let spec = cut_in_spec(8.0);
        let geometry = spec.lane_geometry();
        let log = generate_synthetic(&spec, 0).unwrap();
        let lanes: Vec<u8> = log
            .iter()
            .map(|r| {
                geometry
                    .lane_of(r.tracks.iter().find(|t| t.track_id == 1).unwrap().dx)
                    .unwrap()
            })
            .collect();
        assert_eq!(lanes[0], 3);
        assert_eq!(*lanes.last().unwrap(), 2);
        // crossing at the maneuver midpoint: t = 1.5 s -> sample 37/38
        let first = lanes.iter().position(|&l| l == 2).unwrap();
        assert!((37..=38).contains(&first), "{first}");
    }

    #[test]
    fn close_cut_in_triggers_braking_matching_the_analytic_lag() {
        let spec = cut_in_spec(8.0);
        let rule = &spec.response;
        let geometry = spec.lane_geometry();
        let log = generate_synthetic(&spec, 0).unwrap();
        let crossing = log
            .iter()
            .position(|r| geometry.lane_of(r.tracks[0].dx) == Some(2))
            .unwrap();
        // analytic: constant target from the crossing sample onward
        let target = -rule.gain * (1.0 - 8.0 / rule.threat_distance);
        let a0 = rule.free_accel;
        let horizon = (1.5 / SAMPLE_INTERVAL) as usize;
        let mut reached = None;
        for j in 1..=horizon {
            let expected = target
                + (a0 - target) * math::exp(-(j as f64) * SAMPLE_INTERVAL / rule.time_constant);
            let got = log[crossing + j].ax;
            assert!((got - expected).abs() < 1e-12, "j={j}: {got} vs {expected}");
            if reached.is_none() && got <= -2.0 {
                reached = Some(j);
            }
        }
        let j = reached.expect("ax reaches -2 m/s^2 inside the response window");
        // t = -tau ln((-2 - target) / (a0 - target)) ~= 0.474 s
        let t_cross = -rule.time_constant * math::ln((-2.0 - target) / (a0 - target));
        assert_eq!(j, (t_cross / SAMPLE_INTERVAL).ceil() as usize);
    }

    #[test]
    fn infeasible_specs_are_rejected() {
        let mut spec = cut_in_spec(8.0);
        spec.vehicles[0].lane = 4;
        assert!(matches!(
            generate_synthetic(&spec, 0),
            Err(IngestError::Spec(_))
        ));
        let mut spec = cut_in_spec(8.0);
        spec.vehicles[1].lane = 3;
        spec.vehicles[1].dy = 10.0;
        assert!(matches!(
            generate_synthetic(&spec, 0),
            Err(IngestError::Spec(_))
        ));
        let mut spec = cut_in_spec(8.0);
        spec.lanes = 4;
        assert!(generate_synthetic(&spec, 0).is_err());
        let mut spec = cut_in_spec(8.0);
        spec.vehicles[0].maneuver = Maneuver::CutIn {
            start: 1.0,
            to_lane: 1,
            duration: 1.0,
        };
        assert!(generate_synthetic(&spec, 0).is_err());
    }

    #[test]
    fn suite_episodes_cover_all_classes_and_validate() {
        let suite = SuiteSpec {
            episodes: 60,
            seed: 5,
            ..SuiteSpec::default()
        };
        let episodes = generate_suite(&suite);
        let mut seen = [0usize; 4];
        for e in &episodes {
            e.spec.validate().unwrap();
            seen[e.severity_class as usize] += 1;
        }
        assert!(seen.iter().all(|&c| c > 0), "{seen:?}");
        let logs = generate_suite_logs(&suite).unwrap();
        crate::ingest::validate_log(&logs).unwrap();
        assert_eq!(crate::ingest::split_logs(&logs).len(), 60);
    }
}
