//! Baseline planner: midpoints between paired blue and yellow cones.

use log::warn;

use super::PlanError;
use crate::cone::ConeColor;
use crate::cone_map::{order_boundary, ConeMapError, ConeRegistry};
use crate::geometry::{Pose2D, Vec2};
use crate::path::{catmull_rom, resample_polyline, PathPlan};

pub const PAIR_RADIUS: f64 = 8.0;
pub const MIDLINE_STEP: f64 = 0.25;
pub const MIDLINE_SPEED: f64 = 8.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Midpoints {
    pub points: Vec<Vec2>,
    pub closed: bool,
    /// Blue cones with no yellow partner in range.
    pub orphans: usize,
}

/// Ordered cone-pair midpoints. Open when the blue chain does not close.
pub fn midpoints(reg: &ConeRegistry, start: &Pose2D) -> Result<Midpoints, PlanError> {
    let blue = order_boundary(reg, ConeColor::Blue, start);
    let yellow = reg.confirmed_of(ConeColor::Yellow);
    if blue.cones.is_empty() || yellow.is_empty() {
        let (color, count) =
            if blue.cones.is_empty() { (ConeColor::Blue, 0) } else { (ConeColor::Yellow, 0) };
        return Err(ConeMapError::TooFewCones { color, count }.into());
    }
    let mut points = Vec::with_capacity(blue.cones.len());
    let mut orphans = 0;
    for b in &blue.cones {
        let nearest = yellow
            .iter()
            .copied()
            .min_by(|p, q| p.distance(*b).total_cmp(&q.distance(*b)))
            .filter(|y| y.distance(*b) <= PAIR_RADIUS);
        match nearest {
            Some(y) => points.push((*b + y) * 0.5),
            None => orphans += 1,
        }
    }
    if orphans > 0 {
        warn!("midline: {orphans} blue cones without a yellow partner");
    }
    Ok(Midpoints { points, closed: blue.closed, orphans })
}

/// Smooth and resample midpoints into a constant-speed path.
pub fn midline_path(mid: &Midpoints) -> Result<PathPlan, PlanError> {
    let need = if mid.closed { 3 } else { 2 };
    if mid.points.len() < need {
        return Err(PlanError::TooFewPairs(mid.points.len()));
    }
    let smooth = catmull_rom(&mid.points, mid.closed, MIDLINE_STEP / 2.0);
    let pts = resample_polyline(&smooth, mid.closed, MIDLINE_STEP);
    Ok(PathPlan::from_positions(&pts, mid.closed, MIDLINE_SPEED))
}

pub fn plan_midline(reg: &ConeRegistry, start: &Pose2D) -> Result<PathPlan, PlanError> {
    midline_path(&midpoints(reg, start)?)
}
