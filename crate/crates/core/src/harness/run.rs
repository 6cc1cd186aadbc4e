//! One end-to-end run: simulator, mission, and the run metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cone::Cone;
use crate::coordinator::{detect_lap, Mission, MissionEvent, Phase, TreeError};
use crate::geometry::{segment_intersection, Vec2};
use crate::guidance::ControlLogRow;
use crate::harness::config::{ConfigError, ExperimentConfig};
use crate::metrics::{cone_map_rmse, cross_track_rmse, lap_times, tracking_error, TimedPose, CONE_MATCH_RADIUS};
use crate::path::PathPlan;
use crate::planners::path_metrics;
use crate::sim::{Simulator, TrajectorySample};
use crate::track::{generate_track, Track, TrackError};

/// Simulated time kept after the mission finishes, seconds.
const STOP_TAIL: f64 = 2.0;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("track: {0}")]
    Track(#[from] TrackError),
    #[error("behavior tree: {0}")]
    Tree(#[from] TreeError),
    #[error("scenario: {0}")]
    Scenario(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub final_phase: Phase,
    pub laps_completed: u32,
    pub pose_rmse: Option<f64>,
    pub heading_rmse: Option<f64>,
    pub cone_rmse: Option<f64>,
    pub cone_matched_fraction: f64,
    pub cone_spurious: usize,
    /// Initial racing plan.
    pub path_distance: Option<f64>,
    pub path_total_curvature: Option<f64>,
    /// Ground-truth cross-track error during the racing phase against the
    /// path the controller was following at each tick.
    pub cross_track_rmse: Option<f64>,
    /// Ground-truth start-line lap durations, discovery first.
    pub lap_times: Vec<f64>,
    pub boundary_crossings: usize,
    pub replans: u32,
    pub degraded: bool,
}

impl RunMetrics {
    pub fn finished(&self) -> bool {
        self.final_phase == Phase::Finished
    }

    /// Mean duration of the laps after discovery.
    pub fn fast_lap_time(&self) -> Option<f64> {
        let fast = self.lap_times.get(1..)?;
        (!fast.is_empty()).then(|| fast.iter().sum::<f64>() / fast.len() as f64)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config_id: String,
    pub seed: u64,
    pub track: Track,
    pub trajectory: Vec<TrajectorySample>,
    pub nav: Vec<TimedPose>,
    pub cones: Vec<Cone>,
    pub registry: Vec<Cone>,
    pub planned_path: Option<PathPlan>,
    pub final_path: Option<PathPlan>,
    /// Nearest point of the active racing path to the true position, per tick.
    pub reference: Vec<ReferencePoint>,
    pub events: Vec<MissionEvent>,
    pub control: Vec<ControlLogRow>,
    pub metrics: RunMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

pub fn reference_to_csv(refs: &[ReferencePoint]) -> String {
    let mut out = String::from("t,x,y\n");
    for r in refs {
        out.push_str(&format!("{:.2},{:.6},{:.6}\n", r.t, r.x, r.y));
    }
    out
}

pub fn reference_from_csv(text: &str) -> Result<Vec<ReferencePoint>, csv::Error> {
    csv::Reader::from_reader(text.as_bytes()).deserialize().collect()
}

/// RMS distance between each reference point and the trajectory sample at
/// the same time.
pub fn reference_rmse(refs: &[ReferencePoint], traj: &[TrajectorySample]) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in refs {
        let i = traj.partition_point(|s| s.t < r.t - 1e-6);
        let Some(s) = traj.get(i).filter(|s| (s.t - r.t).abs() < 1e-6) else { continue };
        sum += s.position().distance(Vec2::new(r.x, r.y)).powi(2);
        n += 1;
    }
    (n > 0).then(|| (sum / n as f64).sqrt())
}

/// Number of trajectory steps that cross a boundary segment.
pub fn boundary_crossings(traj: &[Vec2], segments: &[(Vec2, Vec2)]) -> usize {
    traj.windows(2)
        .filter(|w| segments.iter().any(|(a, b)| segment_intersection(w[0], w[1], *a, *b).is_some()))
        .count()
}

/// Forward crossings of the ground-truth start line.
pub fn start_line_crossings(traj: &[TrajectorySample], line: (Vec2, Vec2)) -> Vec<f64> {
    let pts: Vec<(f64, Vec2)> = traj.iter().map(|s| (s.t, s.position())).collect();
    pts.windows(2).filter_map(|w| detect_lap(w, line)).collect()
}

/// Lap durations from the ground-truth trajectory, limited to the laps the
/// mission log reports.
pub fn lap_time(events: &[MissionEvent], traj: &[TrajectorySample], line: (Vec2, Vec2)) -> Vec<f64> {
    let logged = crate::coordinator::lap_crossings(events).len();
    let mut c = start_line_crossings(traj, line);
    c.truncate(logged);
    lap_times(&c)
}

fn phase_start(events: &[MissionEvent], phase: Phase) -> Option<f64> {
    events.iter().find(|e| e.event == "phase" && e.phase == phase).map(|e| e.t)
}

/// Samples inside the racing phase, per the mission log.
pub fn racing_window(events: &[MissionEvent], traj: &[TrajectorySample]) -> Vec<Vec2> {
    let Some(t0) = phase_start(events, Phase::Racing) else { return Vec::new() };
    let t1 = phase_start(events, Phase::Finished).or_else(|| phase_start(events, Phase::Fault)).unwrap_or(f64::INFINITY);
    traj.iter().filter(|s| s.t >= t0 && s.t <= t1).map(|s| s.position()).collect()
}

pub struct MetricInputs<'a> {
    pub track: &'a Track,
    pub trajectory: &'a [TrajectorySample],
    pub nav: &'a [TimedPose],
    pub cones: &'a [Cone],
    pub planned_path: Option<&'a PathPlan>,
    pub final_path: Option<&'a PathPlan>,
    pub reference: &'a [ReferencePoint],
    pub events: &'a [MissionEvent],
}

/// Metrics from the logged artifacts of a run.
pub fn compute_metrics(m: &MetricInputs) -> RunMetrics {
    let gt: Vec<TimedPose> = m.trajectory.iter().map(TimedPose::from).collect();
    let te = tracking_error(m.nav, &gt).ok();
    let cr = cone_map_rmse(m.cones, &m.track.cones, CONE_MATCH_RADIUS).ok();
    let pm = m.planned_path.map(path_metrics);
    let racing = racing_window(m.events, m.trajectory);
    let xt = reference_rmse(m.reference, m.trajectory)
        .or_else(|| m.final_path.filter(|_| !racing.is_empty()).map(|p| cross_track_rmse(&racing, p)));
    let laps = m.track.start_line().map(|l| lap_time(m.events, m.trajectory, l)).unwrap_or_default();
    let pts: Vec<Vec2> = m.trajectory.iter().map(|s| s.position()).collect();
    let final_phase = m
        .events
        .iter()
        .rev()
        .find(|e| e.event == "phase")
        .map(|e| e.phase)
        .unwrap_or(Phase::Discovery);
    RunMetrics {
        final_phase,
        laps_completed: crate::coordinator::lap_crossings(m.events).len().saturating_sub(1) as u32,
        pose_rmse: te.map(|e| e.position_rmse),
        heading_rmse: te.map(|e| e.heading_rmse),
        cone_rmse: cr.and_then(|c| c.rmse),
        cone_matched_fraction: cr.map(|c| c.matched_fraction).unwrap_or(0.0),
        cone_spurious: cr.map(|c| c.spurious_count).unwrap_or(m.cones.len()),
        path_distance: pm.map(|p| p.distance),
        path_total_curvature: pm.map(|p| p.total_curvature),
        cross_track_rmse: xt,
        lap_times: laps,
        boundary_crossings: boundary_crossings(&pts, &m.track.boundary_segments()),
        replans: m.events.iter().filter(|e| e.event == "replan").count() as u32,
        degraded: m.events.iter().any(|e| e.event == "degraded"),
    }
}

/// Drive a mission on `track` until it finishes, faults or runs out of time.
/// `on_tick` sees the simulator and mission after every tick and may mutate
/// the simulator (used for injected disturbances).
pub fn run_on_track_with(
    cfg: &ExperimentConfig,
    track: Track,
    seed: u64,
    mut on_tick: impl FnMut(&mut Simulator, &Mission),
) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    let staging = track.staging_pose();
    let mut sim = Simulator::new(track, cfg.vehicle, cfg.noise, cfg.sensors, seed);
    let mut mission = Mission::new(cfg.mission_config(), staging)?;
    let mut planned_path = None;
    let mut reference = Vec::new();
    let max_ticks = (cfg.max_time / crate::sensors::SIM_DT).ceil() as u64;
    let tail_ticks = (STOP_TAIL / crate::sensors::SIM_DT).round() as u64;
    let mut stopped_at = None;
    for k in 0..max_ticks {
        let frame = sim.sense();
        let out = mission.tick(&frame);
        let st = mission.state();
        if st.phase == Phase::Racing {
            if let Some(p) = &st.active_path {
                planned_path.get_or_insert_with(|| p.clone());
                let q = nearest_point(p, sim.truth().pose.position());
                reference.push(ReferencePoint { t: sim.time(), x: q.x, y: q.y });
            }
        }
        on_tick(&mut sim, &mission);
        if matches!(mission.state().phase, Phase::Finished | Phase::Fault) {
            // keep simulating while the car brakes so the trajectory covers
            // the final line crossing
            let k0 = *stopped_at.get_or_insert(k);
            if k - k0 >= tail_ticks {
                break;
            }
        }
        sim.advance(&out.cmd);
    }
    let final_path = mission.state().active_path.clone().filter(|_| planned_path.is_some());
    let cones = mission.cone_estimate();
    let registry = mission.registry().confirmed_cones();
    let events = mission.events().to_vec();
    let control = mission.control_log().to_vec();
    let nav = mission.nav_log().to_vec();
    let track = sim.track().clone();
    let trajectory = sim.into_log();
    let metrics = compute_metrics(&MetricInputs {
        track: &track,
        trajectory: &trajectory,
        nav: &nav,
        cones: &cones,
        planned_path: planned_path.as_ref(),
        final_path: final_path.as_ref(),
        reference: &reference,
        events: &events,
    });
    Ok(RunOutput {
        config_id: cfg.id.clone(),
        seed,
        track,
        trajectory,
        nav,
        cones,
        registry,
        planned_path,
        final_path,
        reference,
        events,
        control,
        metrics,
    })
}

fn nearest_point(path: &PathPlan, p: Vec2) -> Vec2 {
    match path.nearest_segment(p) {
        Some((i, _, t)) => {
            let (a, b) = path.segment(i);
            a.lerp(b, t)
        }
        None => p,
    }
}

pub fn run_on_track(cfg: &ExperimentConfig, track: Track, seed: u64) -> Result<RunOutput, RunError> {
    run_on_track_with(cfg, track, seed, |_, _| {})
}

/// Generate the seed's track and run on it.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput, RunError> {
    let track = generate_track(&cfg.track_spec(seed))?;
    run_on_track(cfg, track, seed)
}
