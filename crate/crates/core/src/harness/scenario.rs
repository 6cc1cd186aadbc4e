//! Cone displacement during the racing phase.

use serde::{Deserialize, Serialize};

use crate::cone::ConeColor;
use crate::coordinator::Phase;
use crate::geometry::Vec2;
use crate::harness::config::ExperimentConfig;
use crate::harness::run::{boundary_crossings, run_on_track_with, RunError, RunOutput};
use crate::path::PathPlan;
use crate::track::generate_track;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DisplacementSpec {
    /// Distance the cone is pushed toward the racing path, meters.
    pub offset: f64,
    /// Earliest displacement time after the racing phase starts, seconds.
    pub delay: f64,
    /// Candidate cones lie this far ahead of the car along the path.
    pub lead_min: f64,
    pub lead_max: f64,
}

impl Default for DisplacementSpec {
    fn default() -> Self {
        Self { offset: 0.3, delay: 3.0, lead_min: 4.0, lead_max: 9.0 }
    }
}

#[derive(Debug, Clone)]
pub struct DisplacementOutcome {
    pub cone_index: usize,
    pub old_position: Vec2,
    pub new_position: Vec2,
    pub t_displaced: f64,
    /// First racing replan after the displacement.
    pub t_replan: Option<f64>,
    /// Clearance of the path active at displacement time from the new position.
    pub clearance_before: f64,
    /// Clearance of the first replanned path from the new position.
    pub clearance_after: Option<f64>,
    /// Distance from the registry entry to the new position at replan time.
    pub registry_error_at_replan: Option<f64>,
    pub crossings_after: usize,
    pub run: RunOutput,
}

/// Arc length from the start of `path` to the projection of `p`.
fn arc_position(path: &PathPlan, cum: &[f64], p: Vec2) -> f64 {
    let (i, _, t) = path.nearest_segment(p).expect("non-empty path");
    let (a, b) = path.segment(i);
    cum[i] + t * a.distance(b)
}

fn cumulative(path: &PathPlan) -> Vec<f64> {
    let mut cum = vec![0.0];
    for i in 0..path.segment_count() {
        let (a, b) = path.segment(i);
        cum.push(cum[i] + a.distance(b));
    }
    cum
}

fn nearest_point(path: &PathPlan, p: Vec2) -> Vec2 {
    let (i, _, t) = path.nearest_segment(p).expect("non-empty path");
    let (a, b) = path.segment(i);
    a.lerp(b, t)
}

/// Pick the boundary cone closest to the racing path among those ahead of the
/// car, push it toward the path, and follow the mission through the next replan.
pub fn run_displacement(cfg: &ExperimentConfig, seed: u64, spec: &DisplacementSpec) -> Result<DisplacementOutcome, RunError> {
    let track = generate_track(&cfg.track_spec(seed))?;
    let mut displaced: Option<(usize, Vec2, Vec2, f64, f64)> = None;
    let mut after: Option<(f64, f64, Option<f64>)> = None;
    let mut racing_since: Option<f64> = None;
    let run = run_on_track_with(cfg, track, seed, |sim, mission| {
        let st = mission.state();
        if st.phase != Phase::Racing {
            return;
        }
        let t = sim.time();
        let t0 = *racing_since.get_or_insert(t);
        let Some(path) = st.active_path.as_ref() else { return };
        if let Some((_, _, new, td, _)) = displaced {
            if after.is_none() && st.last_replan_t > td {
                let reg = mission.registry().confirmed().map(|e| e.position.distance(new)).fold(f64::INFINITY, f64::min);
                after = Some((st.last_replan_t, path.distance_to(new), reg.is_finite().then_some(reg)));
            }
            return;
        }
        if t - t0 < spec.delay {
            return;
        }
        let cum = cumulative(path);
        let total = *cum.last().unwrap_or(&0.0);
        let car = arc_position(path, &cum, sim.truth().pose.position());
        let pick = sim
            .track()
            .cones
            .iter()
            .enumerate()
            .filter(|(_, c)| c.color != ConeColor::OrangeLarge)
            .filter_map(|(i, c)| {
                let p = c.position();
                let ahead = (arc_position(path, &cum, p) - car).rem_euclid(total.max(1e-9));
                (ahead >= spec.lead_min && ahead <= spec.lead_max).then(|| (i, p, path.distance_to(p)))
            })
            .min_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)));
        let Some((i, p, _)) = pick else { return };
        let delta = (nearest_point(path, p) - p).normalized() * spec.offset;
        if sim.displace_cone(i, delta).is_ok() {
            let new = p + delta;
            displaced = Some((i, p, new, t, path.distance_to(new)));
        }
    })?;
    let Some((cone_index, old_position, new_position, t_displaced, clearance_before)) = displaced else {
        return Err(RunError::Scenario("no cone was displaced".into()));
    };
    let after_pts: Vec<Vec2> = run.trajectory.iter().filter(|s| s.t >= t_displaced).map(|s| s.position()).collect();
    let crossings_after = boundary_crossings(&after_pts, &run.track.boundary_segments());
    Ok(DisplacementOutcome {
        cone_index,
        old_position,
        new_position,
        t_displaced,
        t_replan: after.map(|a| a.0),
        clearance_before,
        clearance_after: after.map(|a| a.1),
        registry_error_at_replan: after.and_then(|a| a.2),
        crossings_after,
        run,
    })
}
