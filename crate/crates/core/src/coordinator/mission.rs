//! Mission state machine: discovery lap, racing-line planning, fast laps.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::cone::Cone;
use crate::cone_map::{build_boundary_grid, register_cones, start_line, ConeRegistry, RegistryConfig, BOUNDARY_RESOLUTION};
use crate::coordinator::bt::{navigation_tree, BehaviorNode, Status, TreeError, TreeSpec};
use crate::estimator::{FilterConfig, FusionFilter, FusionState, Mat6, Vec6};
use crate::geometry::{segment_intersection, Pose2D, Vec2};
use crate::guidance::{guidance_step, ControlLogRow, Controller, GuidanceConfig};
use crate::metrics::TimedPose;
use crate::path::PathPlan;
use crate::planners::{plan_midline, PlanError, PlannerParams, RacingLinePlanner};
use crate::sensors::SensorFrame;
use crate::slam::grid::{GridSlam, GridSlamConfig};
use crate::slam::landmark::{LandmarkSlam, LandmarkSlamConfig, OdometryMode};
use crate::vehicle::{ControlCommand, VehicleState};

pub const ACTIONS: [&str; 3] = ["compute_path", "keep_previous_path", "follow_path"];

/// Odometry history kept for composing delayed SLAM poses, seconds.
const HISTORY_SPAN: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Discovery,
    Planning,
    Racing,
    Finished,
    Fault,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Discovery => "Discovery",
            Phase::Planning => "Planning",
            Phase::Racing => "Racing",
            Phase::Finished => "Finished",
            Phase::Fault => "Fault",
        }
    }

    /// Allowed forward transitions; Fault is reachable from anywhere.
    pub fn can_advance_to(self, next: Phase) -> bool {
        matches!(
            (self, next),
            (Phase::Discovery, Phase::Planning) | (Phase::Planning, Phase::Racing) | (Phase::Racing, Phase::Finished) | (_, Phase::Fault)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SlamMode {
    LandmarkRaw,
    LandmarkFused,
    #[default]
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PlannerKind {
    Midline,
    #[default]
    HybridAStar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MissionConfig {
    pub slam_mode: SlamMode,
    pub planner: PlannerKind,
    pub controller: Controller,
    /// Racing laps after the discovery lap.
    pub fast_laps: u32,
    pub discovery_speed: f64,
    pub replan_period: f64,
    /// Midline-so-far refresh period during discovery.
    pub discovery_replan_period: f64,
    /// A lap counts once the driven arc exceeds this fraction of the path length.
    pub lap_fraction: f64,
    pub guidance: GuidanceConfig,
    pub planner_params: PlannerParams,
    pub registry: RegistryConfig,
    pub filter: FilterConfig,
    pub landmark: LandmarkSlamConfig,
    pub grid: GridSlamConfig,
    /// Overrides the default discovery and racing trees.
    pub discovery_tree: Option<TreeSpec>,
    pub racing_tree: Option<TreeSpec>,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            slam_mode: SlamMode::default(),
            planner: PlannerKind::default(),
            controller: Controller::default(),
            fast_laps: 1,
            discovery_speed: 4.0,
            replan_period: 2.0,
            discovery_replan_period: 0.2,
            lap_fraction: 0.8,
            guidance: GuidanceConfig::default(),
            planner_params: PlannerParams::default(),
            registry: RegistryConfig::default(),
            filter: FilterConfig::default(),
            landmark: LandmarkSlamConfig::default(),
            grid: GridSlamConfig::default(),
            discovery_tree: None,
            racing_tree: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MissionState {
    pub phase: Phase,
    /// Completed laps, discovery included.
    pub lap_count: u32,
    pub active_path: Option<PathPlan>,
    pub last_replan_t: f64,
    /// A racing replan failed and the previous path was kept.
    pub degraded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionEvent {
    pub t: f64,
    pub phase: Phase,
    pub event: String,
    pub detail: String,
}

pub fn mission_log_to_jsonl(events: &[MissionEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("event serializes"));
        out.push('\n');
    }
    out
}

pub fn mission_log_from_jsonl(text: &str) -> serde_json::Result<Vec<MissionEvent>> {
    text.lines().filter(|l| !l.trim().is_empty()).map(serde_json::from_str).collect()
}

/// Start-line crossing times recorded in a mission log.
pub fn lap_crossings(events: &[MissionEvent]) -> Vec<f64> {
    events.iter().filter(|e| e.event == "start_line").map(|e| e.t).collect()
}

/// First forward crossing of `line` (left end first) along the sampled
/// trajectory, with the crossing time interpolated inside the segment.
pub fn detect_lap(window: &[(f64, Vec2)], line: (Vec2, Vec2)) -> Option<f64> {
    let (l, r) = line;
    let forward = (r - l).perp();
    window.windows(2).find_map(|w| {
        let ((t0, p0), (t1, p1)) = (w[0], w[1]);
        if (p1 - p0).dot(forward) <= 0.0 {
            return None;
        }
        let (s, _) = segment_intersection(p0, p1, l, r)?;
        Some(t0 + s * (t1 - t0))
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickOutput {
    pub cmd: ControlCommand,
    pub status: Status,
}

enum Slam {
    Landmark(LandmarkSlam),
    Grid(GridSlam),
}

/// Timed pose ring for looking up odometry at a SLAM stamp.
#[derive(Default)]
struct History(VecDeque<(f64, Pose2D)>);

impl History {
    fn push(&mut self, t: f64, p: Pose2D) {
        self.0.push_back((t, p));
        while self.0.front().is_some_and(|(t0, _)| t - t0 > HISTORY_SPAN) {
            self.0.pop_front();
        }
    }

    fn last(&self) -> Option<Pose2D> {
        self.0.back().map(|x| x.1)
    }

    fn at(&self, t: f64) -> Option<Pose2D> {
        self.0.iter().rev().find(|(ti, _)| *ti <= t + 1e-9).map(|x| x.1)
    }
}

pub struct Mission {
    cfg: MissionConfig,
    staging: Pose2D,
    state: MissionState,
    filter: FusionFilter,
    slam: Slam,
    registry: ConeRegistry,
    racing: RacingLinePlanner,
    discovery_tree: Option<BehaviorNode>,
    racing_tree: Option<BehaviorNode>,
    odom: History,
    dead_reckoning: History,
    nav: Option<Pose2D>,
    nav_log: Vec<TimedPose>,
    speed: f64,
    cmd: ControlCommand,
    last_nav_sample: Option<(f64, Vec2)>,
    arc: f64,
    lap_open: bool,
    events: Vec<MissionEvent>,
    control_log: Vec<ControlLogRow>,
    replans: u32,
    now: f64,
}

impl Mission {
    /// `staging` is the known start pose, also the map-frame origin.
    pub fn new(cfg: MissionConfig, staging: Pose2D) -> Result<Self, TreeError> {
        let known = &ACTIONS[..];
        let dtree = cfg.discovery_tree.clone().unwrap_or_else(|| navigation_tree(cfg.discovery_replan_period));
        let rtree = cfg.racing_tree.clone().unwrap_or_else(|| navigation_tree(cfg.replan_period));
        let discovery_tree = Some(BehaviorNode::build(&dtree, known)?);
        let racing_tree = Some(BehaviorNode::build(&rtree, known)?);
        let mean = Vec6::new(staging.x, staging.y, staging.theta, 0.0, 0.0, 0.0);
        let cov = Mat6::from_diagonal(&Vec6::new(1e-4, 1e-4, 1e-6, 1e-4, 1e-4, 1e-4));
        let filter = FusionFilter::with_initial(cfg.filter, FusionState::new(mean, cov), 0.0);
        let slam = match cfg.slam_mode {
            SlamMode::LandmarkRaw => {
                Slam::Landmark(LandmarkSlam::with_initial(LandmarkSlamConfig { mode: OdometryMode::RawIns, ..cfg.landmark }, staging, 0.0))
            }
            SlamMode::LandmarkFused => {
                Slam::Landmark(LandmarkSlam::with_initial(LandmarkSlamConfig { mode: OdometryMode::Fused, ..cfg.landmark }, staging, 0.0))
            }
            SlamMode::Grid => Slam::Grid(GridSlam::with_initial(cfg.grid, staging)),
        };
        let mut m = Self {
            registry: ConeRegistry::new(cfg.registry),
            racing: RacingLinePlanner::new(cfg.planner_params.clone()),
            cfg,
            staging,
            state: MissionState { phase: Phase::Discovery, lap_count: 0, active_path: None, last_replan_t: 0.0, degraded: false },
            filter,
            slam,
            discovery_tree,
            racing_tree,
            odom: History::default(),
            dead_reckoning: History::default(),
            nav: None,
            nav_log: Vec::new(),
            speed: 0.0,
            cmd: ControlCommand::stop(),
            last_nav_sample: None,
            arc: 0.0,
            lap_open: false,
            events: Vec::new(),
            control_log: Vec::new(),
            replans: 0,
            now: 0.0,
        };
        m.event("start", format!("{:?}/{:?}/{:?}", m.cfg.slam_mode, m.cfg.planner, m.cfg.controller));
        Ok(m)
    }

    pub fn config(&self) -> &MissionConfig {
        &self.cfg
    }

    pub fn state(&self) -> &MissionState {
        &self.state
    }

    pub fn registry(&self) -> &ConeRegistry {
        &self.registry
    }

    pub fn events(&self) -> &[MissionEvent] {
        &self.events
    }

    pub fn control_log(&self) -> &[ControlLogRow] {
        &self.control_log
    }

    /// Navigation pose samples at the tree rate.
    pub fn nav_log(&self) -> &[TimedPose] {
        &self.nav_log
    }

    pub fn nav_pose(&self) -> Option<Pose2D> {
        self.nav
    }

    /// Latest fused odometry pose.
    pub fn odometry_pose(&self) -> Option<Pose2D> {
        self.odom.last()
    }

    pub fn replan_count(&self) -> u32 {
        self.replans
    }

    pub fn grid_degraded_count(&self) -> u64 {
        match &self.slam {
            Slam::Grid(g) => g.degraded_count(),
            Slam::Landmark(_) => 0,
        }
    }

    /// Cone map produced by the active backend: the EKF landmarks for the
    /// landmark modes, the confirmed registry for grid SLAM.
    pub fn cone_estimate(&self) -> Vec<Cone> {
        match &self.slam {
            Slam::Landmark(s) => s.extract().0,
            Slam::Grid(_) => self.registry.confirmed_cones(),
        }
    }

    fn event(&mut self, event: &str, detail: String) {
        self.events.push(MissionEvent { t: self.now, phase: self.state.phase, event: event.to_string(), detail });
    }

    fn set_phase(&mut self, next: Phase, detail: String) {
        debug_assert!(self.state.phase.can_advance_to(next), "{:?} -> {:?}", self.state.phase, next);
        self.state.phase = next;
        self.event("phase", detail);
    }

    fn fault(&mut self, why: String) {
        self.set_phase(Phase::Fault, why);
        self.cmd = ControlCommand::stop();
    }

    pub fn tick(&mut self, frame: &SensorFrame) -> TickOutput {
        if frame.is_empty() {
            return TickOutput { cmd: self.cmd, status: Status::Running };
        }
        self.now = frame.t;
        if matches!(self.state.phase, Phase::Finished | Phase::Fault) {
            self.cmd = ControlCommand::stop();
            return TickOutput { cmd: self.cmd, status: Status::Success };
        }
        if let Err(e) = self.estimate(frame) {
            self.fault(format!("estimator: {e}"));
            return TickOutput { cmd: self.cmd, status: Status::Failure };
        }
        if frame.tick % 2 != 0 {
            return TickOutput { cmd: self.cmd, status: Status::Running };
        }
        let Some(nav) = self.nav else { return TickOutput { cmd: self.cmd, status: Status::Running } };
        self.nav_log.push(TimedPose { t: frame.t, pose: nav });
        self.track_laps(frame.t, nav.position());
        if self.state.phase == Phase::Planning {
            self.plan_race();
        }
        let slot = match self.state.phase {
            Phase::Discovery => &mut self.discovery_tree,
            Phase::Racing => &mut self.racing_tree,
            _ => return TickOutput { cmd: self.cmd, status: Status::Success },
        };
        let mut tree = slot.take().expect("tree present between ticks");
        let status = tree.tick(frame.t, &mut |a| self.run_action(a));
        match self.state.phase {
            Phase::Discovery => self.discovery_tree = Some(tree),
            _ => self.racing_tree = Some(tree),
        }
        if status == Status::Failure {
            self.cmd = ControlCommand::stop();
        }
        TickOutput { cmd: self.cmd, status }
    }

    fn estimate(&mut self, frame: &SensorFrame) -> Result<(), crate::estimator::EstimatorError> {
        let outputs = self.filter.process(frame)?;
        let odom_now = self.filter.state().map(|s| s.pose()).unwrap_or(self.staging);
        if let Some(s) = self.filter.state() {
            self.speed = s.mean[crate::estimator::IV];
        }
        self.odom.push(frame.t, odom_now);
        let prev = self.dead_reckoning.0.back().copied().unwrap_or((0.0, self.staging));
        let mut dr = prev.1;
        if let (Some(imu), Some(w)) = (frame.imu, frame.wheel_speed) {
            let dt = frame.t - prev.0;
            dr = Pose2D::new(dr.x + w * imu.theta.cos() * dt, dr.y + w * imu.theta.sin() * dt, imu.theta);
        }
        self.dead_reckoning.push(frame.t, dr);

        let (pose, stamp) = match &mut self.slam {
            Slam::Landmark(s) => {
                s.process(frame, &outputs);
                s.pose().unwrap_or((self.staging, 0.0))
            }
            Slam::Grid(g) => {
                if let Some(scan) = frame.scan.as_ref() {
                    g.step(&odom_now, frame.t, scan);
                }
                g.pose().unwrap_or((self.staging, 0.0))
            }
        };
        let hist = match self.cfg.slam_mode {
            SlamMode::LandmarkRaw => &self.dead_reckoning,
            _ => &self.odom,
        };
        let nav = match (hist.at(stamp), hist.last()) {
            (Some(at), Some(now)) => pose.compose(&at.between(&now)),
            _ => pose,
        };
        self.nav = Some(nav);
        if let Some(dets) = frame.cone_detections.as_ref() {
            register_cones(&mut self.registry, dets, &nav);
        }
        Ok(())
    }

    fn track_laps(&mut self, t: f64, p: Vec2) {
        let prev = self.last_nav_sample.replace((t, p));
        let Some(prev) = prev else { return };
        self.arc += prev.1.distance(p);
        let Some(line) = start_line(&self.registry, &self.staging) else { return };
        let Some(tc) = detect_lap(&[prev, (t, p)], line) else { return };
        if !self.lap_open {
            self.lap_open = true;
            self.arc = 0.0;
            self.event("start_line", "lap 1 opened".into());
            return;
        }
        let needed = match (&self.state.phase, &self.state.active_path) {
            (Phase::Discovery, Some(path)) if path.closed => path.length(),
            (Phase::Racing, Some(path)) => path.length(),
            _ => return,
        };
        if self.arc <= self.cfg.lap_fraction * needed {
            return;
        }
        self.arc = 0.0;
        self.state.lap_count += 1;
        let saved = self.now;
        self.now = tc;
        self.event("start_line", format!("lap {} completed", self.state.lap_count));
        self.now = saved;
        match self.state.phase {
            Phase::Discovery => self.set_phase(Phase::Planning, "discovery lap complete".into()),
            Phase::Racing if self.state.lap_count > self.cfg.fast_laps => {
                self.set_phase(Phase::Finished, format!("{} laps", self.state.lap_count));
                self.cmd = ControlCommand::stop();
            }
            _ => {}
        }
    }

    fn race_plan(&mut self) -> Result<PathPlan, PlanError> {
        match self.cfg.planner {
            PlannerKind::Midline => {
                let p = plan_midline(&self.registry, &self.staging)?;
                if !p.closed {
                    return Err(PlanError::TooFewPairs(p.len()));
                }
                Ok(p)
            }
            PlannerKind::HybridAStar => {
                let grid = build_boundary_grid(&self.registry, BOUNDARY_RESOLUTION, &self.staging)
                    .map_err(|e| PlanError::InvalidParams(e.to_string()))?;
                self.racing.plan(&self.registry, &grid, &self.staging)
            }
        }
    }

    fn plan_race(&mut self) {
        match self.race_plan() {
            Ok(p) => {
                let detail = format!("{:?} path {:.2} m", self.cfg.planner, p.length());
                self.state.active_path = Some(p);
                self.state.last_replan_t = self.now;
                self.set_phase(Phase::Racing, detail);
                self.mark_planned();
            }
            Err(e) => self.fault(format!("planning failed: {e}")),
        }
    }

    /// The first racing replan comes one period after the initial plan.
    fn mark_planned(&mut self) {
        if let Some(t) = self.racing_tree.as_mut() {
            prime_limiters(t, self.now);
        }
    }

    fn run_action(&mut self, name: &str) -> Status {
        match name {
            "compute_path" => self.compute_path(),
            "keep_previous_path" => {
                if self.state.active_path.is_some() {
                    Status::Success
                } else {
                    Status::Failure
                }
            }
            "follow_path" => self.follow_path(),
            _ => Status::Failure,
        }
    }

    fn compute_path(&mut self) -> Status {
        let Some(nav) = self.nav else { return Status::Failure };
        match self.state.phase {
            Phase::Discovery => match plan_midline(&self.registry, &nav) {
                Ok(p) => {
                    self.state.active_path = Some(p);
                    self.state.last_replan_t = self.now;
                    Status::Success
                }
                Err(_) => Status::Failure,
            },
            Phase::Racing => match self.race_plan() {
                Ok(p) => {
                    self.replans += 1;
                    self.event("replan", format!("{:.2} m", p.length()));
                    self.state.active_path = Some(p);
                    self.state.last_replan_t = self.now;
                    Status::Success
                }
                Err(e) => {
                    if !self.state.degraded {
                        self.event("degraded", format!("replan failed: {e}"));
                    }
                    self.state.degraded = true;
                    Status::Failure
                }
            },
            _ => Status::Failure,
        }
    }

    fn follow_path(&mut self) -> Status {
        let (Some(nav), Some(path)) = (self.nav, self.state.active_path.as_ref()) else { return Status::Failure };
        let mut gcfg = self.cfg.guidance;
        if self.state.phase == Phase::Discovery {
            gcfg.target_speed = self.cfg.discovery_speed;
        }
        let vs = VehicleState { v: self.speed, ..VehicleState::at_rest(nav) };
        let Some(out) = guidance_step(self.cfg.controller, &vs, path, &gcfg) else { return Status::Failure };
        self.cmd = out.cmd;
        self.control_log.push(ControlLogRow {
            t: self.now,
            steer_cmd: out.cmd.steer,
            speed_cmd: out.cmd.target_speed,
            cross_track_error: out.lookahead.cross_track,
            lookahead_x: out.lookahead.world.x,
            lookahead_y: out.lookahead.world.y,
        });
        Status::Running
    }
}

fn prime_limiters(node: &mut BehaviorNode, now: f64) {
    match node {
        BehaviorNode::Sequence(c) | BehaviorNode::Fallback(c) => c.iter_mut().for_each(|n| prime_limiters(n, now)),
        BehaviorNode::RateLimiter { last, child, .. } => {
            *last = Some(now);
            prime_limiters(child, now);
        }
        BehaviorNode::Action(_) => {}
    }
}
