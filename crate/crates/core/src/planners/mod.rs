//! Route planners: the cone-midline baseline and a hybrid-A* racing line.

pub mod costmap;
pub mod dubins;
pub mod hybrid_astar;
pub mod midline;
pub mod racing_line;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cone_map::ConeMapError;
use crate::geometry::normalize_angle;
use crate::path::PathPlan;

pub use hybrid_astar::plan_hybrid_astar;
pub use midline::plan_midline;
pub use racing_line::{plan_racing_line, RacingLinePlanner};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerParams {
    pub min_turn_radius: f64,
    pub curvature_penalty: f64,
    pub boundary_inflation: f64,
    pub cost_weight: f64,
    pub primitive_arc: f64,
    /// Width of the soft cost band outside the inflation radius.
    pub cost_band: f64,
    pub heading_bins: usize,
    /// Spatial bin size of the closed set.
    pub bin_size: f64,
    pub goal_tolerance: f64,
    pub goal_heading_tolerance: f64,
    /// Analytic Dubins shots are tried within this distance of the goal.
    pub shot_distance: f64,
    pub max_expansions: usize,
    /// Output sample spacing along arcs.
    pub sample_step: f64,
    /// Turn radii tried by the shortcut smoother, largest first. The minimum
    /// turn radius is always tried last.
    pub smoothing_radii: Vec<f64>,
    pub anchors: usize,
    pub max_speed: f64,
    pub lateral_accel: f64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            min_turn_radius: 3.5,
            curvature_penalty: 1.2,
            boundary_inflation: 0.6,
            cost_weight: 0.5,
            primitive_arc: 1.0,
            cost_band: 0.5,
            heading_bins: 72,
            bin_size: 0.25,
            goal_tolerance: 0.5,
            goal_heading_tolerance: 0.35,
            shot_distance: 12.0,
            max_expansions: 400_000,
            sample_step: 0.25,
            smoothing_radii: vec![12.0, 8.0, 5.5],
            anchors: 4,
            max_speed: 8.0,
            lateral_accel: 12.0,
        }
    }
}

impl PlannerParams {
    pub fn validate(&self, resolution: f64) -> Result<(), PlanError> {
        if !(self.min_turn_radius > 0.0) {
            return Err(PlanError::InvalidParams("min_turn_radius must be positive".into()));
        }
        if self.primitive_arc < 2.0 * resolution - 1e-12 || self.primitive_arc > 2.0 {
            return Err(PlanError::InvalidParams(format!(
                "primitive_arc {} outside [{}, 2]",
                self.primitive_arc,
                2.0 * resolution
            )));
        }
        if self.heading_bins == 0 || !(self.bin_size > 0.0) || !(self.sample_step > 0.0) || self.anchors < 2 {
            return Err(PlanError::InvalidParams("bins, sample step and anchor count must be positive".into()));
        }
        Ok(())
    }

    /// Speed cap from the lateral acceleration limit.
    pub fn speed_for_curvature(&self, kappa: f64) -> f64 {
        if kappa.abs() < 1e-9 {
            self.max_speed
        } else {
            self.max_speed.min((self.lateral_accel / kappa.abs()).sqrt())
        }
    }
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error(transparent)]
    ConeMap(#[from] ConeMapError),
    #[error("not enough blue/yellow pairs for a midline ({0})")]
    TooFewPairs(usize),
    #[error("start pose is inside an inflated obstacle")]
    StartBlocked,
    #[error("goal pose is inside an inflated obstacle")]
    GoalBlocked,
    #[error("open set exhausted after {explored} expansions")]
    OpenSetExhausted { explored: usize },
    #[error("expansion limit reached after {explored} expansions")]
    ExpansionLimit { explored: usize },
    #[error("racing line segment {segment} failed: {source}")]
    Segment { segment: usize, source: Box<PlanError> },
    #[error("invalid planner parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathMetrics {
    pub distance: f64,
    pub total_curvature: f64,
}

/// Length (with the closing segment for closed paths) and summed absolute
/// heading change between consecutive segments.
pub fn path_metrics(path: &PathPlan) -> PathMetrics {
    let pts = path.positions();
    let n = pts.len();
    if n < 2 {
        return PathMetrics { distance: 0.0, total_curvature: 0.0 };
    }
    let mut segs: Vec<_> = pts.windows(2).map(|w| w[1] - w[0]).collect();
    if path.closed && n > 2 {
        segs.push(pts[0] - pts[n - 1]);
    }
    segs.retain(|s| s.norm() > 1e-12);
    let distance = segs.iter().map(|s| s.norm()).sum();
    let mut total = 0.0;
    for w in segs.windows(2) {
        total += normalize_angle(w[1].angle() - w[0].angle()).abs();
    }
    if path.closed && segs.len() > 2 {
        total += normalize_angle(segs[0].angle() - segs[segs.len() - 1].angle()).abs();
    }
    PathMetrics { distance, total_curvature: total }
}
