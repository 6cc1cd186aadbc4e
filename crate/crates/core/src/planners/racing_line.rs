//! Closed racing line: hybrid A* between midline anchors, then shortcut
//! smoothing with Dubins connections.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use log::debug;

use super::costmap::Costmap;
use super::hybrid_astar::{dubins_connect, search, SearchOptions, Trace};
use super::midline::plan_midline;
use super::{PlanError, PlannerParams};
use crate::cone_map::ConeRegistry;
use crate::geometry::Pose2D;
use crate::grid::OccupancyGrid;
use crate::path::PathPlan;

/// Longest stretch a single shortcut may replace, in metres.
const MAX_SHORTCUT: f64 = 40.0;
const SMOOTHING_PASSES: usize = 4;

/// Poses at `count` equal arc-length stations along a closed path.
pub fn anchor_poses(path: &PathPlan, count: usize) -> Vec<Pose2D> {
    let pts = path.positions();
    let n = pts.len();
    let mut cum = vec![0.0];
    for i in 0..n {
        let j = (i + 1) % n;
        cum.push(cum[i] + pts[i].distance(pts[j]));
    }
    let total = cum[n];
    let mut out = Vec::with_capacity(count);
    let mut seg = 0;
    for k in 0..count {
        let s = total * k as f64 / count as f64;
        while seg + 1 < n && cum[seg + 1] < s {
            seg += 1;
        }
        let (a, b) = (pts[seg], pts[(seg + 1) % n]);
        let len = cum[seg + 1] - cum[seg];
        let t = if len > 0.0 { (s - cum[seg]) / len } else { 0.0 };
        let p = a.lerp(b, t);
        out.push(Pose2D::new(p.x, p.y, (b - a).angle()));
    }
    out
}

/// Move an anchor along its heading until it leaves inflated space.
fn free_anchor(cm: &Costmap, p: Pose2D) -> Pose2D {
    if !cm.is_lethal(p.position()) {
        return p;
    }
    let lateral = p.heading().perp();
    for k in 1..=30 {
        for sign in [1.0, -1.0] {
            let q = p.position() + lateral * (sign * 0.1 * k as f64);
            if !cm.is_lethal(q) {
                return Pose2D::new(q.x, q.y, p.theta);
            }
        }
    }
    p
}

fn arc_between(cum: &[f64], i: usize, j: usize) -> f64 {
    cum[j] - cum[i]
}

/// Length plus the curvature penalty on the heading change, as in the search.
fn stretch_cost(len: f64, turn: f64, params: &PlannerParams) -> f64 {
    len + params.curvature_penalty * turn
}

/// One greedy shortcut pass over a closed loop of poses starting at `offset`.
fn shortcut_pass(cm: &Costmap, loop_: &Trace, offset: usize, params: &PlannerParams) -> Trace {
    let n = loop_.poses.len();
    let idx = |k: usize| (k + offset) % n;
    let q: Vec<Pose2D> = (0..=n).map(|k| loop_.poses[idx(k)]).collect();
    let qk: Vec<f64> = (0..=n).map(|k| loop_.kappa[idx(k)]).collect();
    let mut cum = vec![0.0];
    let mut turn = vec![0.0];
    for k in 0..n {
        let d = q[k].position().distance(q[k + 1].position());
        cum.push(cum[k] + d);
        turn.push(turn[k] + qk[k + 1].abs() * d);
    }
    let mut radii = params.smoothing_radii.clone();
    radii.push(params.min_turn_radius);
    radii.retain(|&r| r >= params.min_turn_radius);

    let mut out = Trace::start(q[0]);
    out.kappa[0] = qk[0];
    let mut i = 0;
    while i < n {
        let mut hi = i + 1;
        while hi < n && cum[hi + 1] - cum[i] <= MAX_SHORTCUT {
            hi += 1;
        }
        let mut taken = false;
        let mut j = hi;
        while j >= i + 2 && !taken {
            let orig = stretch_cost(arc_between(&cum, i, j), arc_between(&turn, i, j), params);
            for &r in &radii {
                let Some((d, samples)) = dubins_connect(cm, &q[i], &q[j], r, orig - 1e-3, params.sample_step) else {
                    continue;
                };
                if stretch_cost(d.length(), d.turning(), params) < orig - 1e-3 {
                    for (k, (p, kap)) in samples.iter().enumerate() {
                        // land exactly on the existing pose to keep joints continuous
                        let p = if k + 1 == samples.len() { q[j] } else { *p };
                        out.push(p, *kap);
                    }
                    taken = true;
                    break;
                }
            }
            if !taken {
                j -= 1;
            }
        }
        if taken {
            i = j;
        } else {
            out.push(q[i + 1], qk[i + 1]);
            i += 1;
        }
    }
    // drop the duplicated start
    out.poses.pop();
    let k0 = out.kappa.pop().unwrap_or(0.0);
    out.kappa[0] = k0;
    out
}

fn trace_is_free(cm: &Costmap, t: &Trace) -> bool {
    let mut pts = t.positions();
    pts.push(pts[0]);
    cm.polyline_free(&pts)
}

fn loop_cost(t: &Trace, params: &PlannerParams) -> f64 {
    let n = t.poses.len();
    (0..n)
        .map(|k| {
            let j = (k + 1) % n;
            let d = t.poses[k].position().distance(t.poses[j].position());
            stretch_cost(d, t.kappa[j].abs() * d, params)
        })
        .sum()
}

/// Racing line on a prepared costmap.
pub fn racing_line_on(cm: &Costmap, midline: &PathPlan, params: &PlannerParams) -> Result<PathPlan, PlanError> {
    let anchors: Vec<Pose2D> = anchor_poses(midline, params.anchors).into_iter().map(|a| free_anchor(cm, a)).collect();
    let k = anchors.len();
    let mut loop_ = Trace::default();
    for s in 0..k {
        let (a, b) = (anchors[s], anchors[(s + 1) % k]);
        let table = cm.distance_to(b.position());
        let res = search(cm, &table, &a, &b, params, SearchOptions::default())
            .map_err(|e| PlanError::Segment { segment: s, source: Box::new(e) })?;
        debug!("racing line segment {s}: {} expansions, exact {}", res.expanded, res.exact);
        let skip = if loop_.poses.is_empty() { 0 } else { 1 };
        loop_.poses.extend_from_slice(&res.trace.poses[skip..]);
        loop_.kappa.extend_from_slice(&res.trace.kappa[skip..]);
    }
    // the last segment ends on the first anchor
    loop_.poses.pop();
    loop_.kappa.pop();

    let mut best = loop_;
    for pass in 0..SMOOTHING_PASSES {
        let n = best.poses.len();
        let offset = [0, n / 2, n / 4, 3 * n / 4][pass % 4];
        let next = shortcut_pass(cm, &best, offset, params);
        let gain = loop_cost(&best, params) - loop_cost(&next, params);
        if next.poses.len() < 3 || !trace_is_free(cm, &next) || gain < 0.0 {
            break;
        }
        best = next;
        if gain < 1e-3 {
            break;
        }
    }
    Ok(best.to_path(true, params))
}

pub fn plan_racing_line(
    reg: &ConeRegistry,
    grid: &OccupancyGrid,
    params: &PlannerParams,
    start: &Pose2D,
) -> Result<PathPlan, PlanError> {
    params.validate(grid.resolution())?;
    let midline = plan_midline(reg, start)?;
    if !midline.closed {
        return Err(PlanError::TooFewPairs(midline.len()));
    }
    let cm = Costmap::from_grid(grid, params.boundary_inflation, params.cost_band);
    racing_line_on(&cm, &midline, params)
}

/// Racing-line planner that reuses its last result while the grid, registry
/// and parameters are unchanged.
#[derive(Debug, Clone, Default)]
pub struct RacingLinePlanner {
    pub params: PlannerParams,
    cache: Option<(u64, PathPlan)>,
    pub hits: usize,
}

impl RacingLinePlanner {
    pub fn new(params: PlannerParams) -> Self {
        Self { params, cache: None, hits: 0 }
    }

    fn key(&self, reg: &ConeRegistry, grid: &OccupancyGrid, start: &Pose2D) -> u64 {
        let mut h = DefaultHasher::new();
        for c in grid.cells() {
            c.to_bits().hash(&mut h);
        }
        grid.width().hash(&mut h);
        grid.origin().x.to_bits().hash(&mut h);
        grid.origin().y.to_bits().hash(&mut h);
        for c in reg.confirmed_cones() {
            c.x.to_bits().hash(&mut h);
            c.y.to_bits().hash(&mut h);
        }
        for v in [start.x, start.y, start.theta] {
            v.to_bits().hash(&mut h);
        }
        format!("{:?}", self.params).hash(&mut h);
        h.finish()
    }

    pub fn plan(&mut self, reg: &ConeRegistry, grid: &OccupancyGrid, start: &Pose2D) -> Result<PathPlan, PlanError> {
        let key = self.key(reg, grid, start);
        if let Some((k, p)) = &self.cache {
            if *k == key {
                self.hits += 1;
                return Ok(p.clone());
            }
        }
        let p = plan_racing_line(reg, grid, &self.params, start)?;
        self.cache = Some((key, p.clone()));
        Ok(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::{Cone, ConeColor};
    use crate::cone_map::{build_boundary_grid, ConeRegistry, BOUNDARY_RESOLUTION};
    use crate::geometry::Vec2;
    use crate::planners::path_metrics;

    fn annulus() -> (ConeRegistry, Pose2D) {
        let (ri, ro) = (12.0, 16.0);
        let mut cones = Vec::new();
        let n = 24;
        for k in 0..n {
            let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            cones.push(Cone::at(Vec2::from_polar(ri, a), ConeColor::Blue));
            cones.push(Cone::at(Vec2::from_polar(ro, a), ConeColor::Yellow));
        }
        (ConeRegistry::from_cones(&cones), Pose2D::new(14.0, 0.0, std::f64::consts::FRAC_PI_2))
    }

    #[test]
    fn annulus_line_not_longer_than_midline() {
        let (reg, start) = annulus();
        let params = PlannerParams::default();
        let grid = build_boundary_grid(&reg, BOUNDARY_RESOLUTION, &start).unwrap();
        let mid = plan_midline(&reg, &start).unwrap();
        let line = plan_racing_line(&reg, &grid, &params, &start).unwrap();
        let (lm, mm) = (path_metrics(&line), path_metrics(&mid));
        assert!(line.closed);
        assert!(lm.distance <= mm.distance, "{} vs {}", lm.distance, mm.distance);
        assert!(line.max_abs_curvature() <= 1.0 / params.min_turn_radius + 1e-9);
        let cm = Costmap::from_grid(&grid, params.boundary_inflation, 0.0);
        let mut pts = line.positions();
        pts.push(pts[0]);
        assert!(cm.polyline_free(&pts));
    }

    #[test]
    fn memoized_and_deterministic() {
        let (reg, start) = annulus();
        let grid = build_boundary_grid(&reg, BOUNDARY_RESOLUTION, &start).unwrap();
        let mut planner = RacingLinePlanner::new(PlannerParams::default());
        let a = planner.plan(&reg, &grid, &start).unwrap();
        let b = planner.plan(&reg, &grid, &start).unwrap();
        assert_eq!(planner.hits, 1);
        let c = plan_racing_line(&reg, &grid, &PlannerParams::default(), &start).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }
}
