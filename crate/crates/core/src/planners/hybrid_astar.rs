//! Forward-only hybrid A* over constant-curvature arc primitives.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use super::costmap::{Costmap, GoalDistance};
use super::dubins::{arc_pose, DubinsPath};
use super::{PlanError, PlannerParams};
use crate::geometry::{normalize_angle, Pose2D, Vec2};
use crate::grid::OccupancyGrid;
use crate::path::{PathPlan, PathPoint};

/// Sampled poses along a drive. `kappa[k]` is the curvature of the motion
/// arriving at `poses[k]`; `kappa[0]` repeats the first motion.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub poses: Vec<Pose2D>,
    pub kappa: Vec<f64>,
}

impl Trace {
    pub fn start(p: Pose2D) -> Self {
        Self { poses: vec![p], kappa: vec![0.0] }
    }

    pub fn push(&mut self, p: Pose2D, kappa: f64) {
        if self.poses.len() == 1 {
            self.kappa[0] = kappa;
        }
        self.poses.push(p);
        self.kappa.push(kappa);
    }

    pub fn positions(&self) -> Vec<Vec2> {
        self.poses.iter().map(|p| p.position()).collect()
    }

    pub fn length(&self) -> f64 {
        self.poses.windows(2).map(|w| w[0].position().distance(w[1].position())).sum()
    }

    pub fn to_path(&self, closed: bool, params: &PlannerParams) -> PathPlan {
        let points = self
            .poses
            .iter()
            .zip(&self.kappa)
            .map(|(p, &k)| PathPoint {
                x: p.x,
                y: p.y,
                heading: p.theta,
                curvature: k,
                target_speed: params.speed_for_curvature(k),
            })
            .collect();
        PathPlan::new(points, closed)
    }
}

/// Sample an arc from `from` (exclusive) at spacing <= `step`.
pub fn arc_samples(from: &Pose2D, kappa: f64, len: f64, step: f64) -> Vec<Pose2D> {
    let n = (len / step).ceil().max(1.0) as usize;
    (1..=n).map(|j| arc_pose(from, kappa, len * j as f64 / n as f64)).collect()
}

fn poly_free(cm: &Costmap, from: &Pose2D, pts: &[Pose2D]) -> bool {
    let mut prev = from.position();
    for p in pts {
        if !cm.segment_free(prev, p.position()) {
            return false;
        }
        prev = p.position();
    }
    true
}

/// Shortest collision-free Dubins connection at radius `r`, if one is no
/// longer than `max_len`.
pub fn dubins_connect(
    cm: &Costmap,
    from: &Pose2D,
    to: &Pose2D,
    r: f64,
    max_len: f64,
    step: f64,
) -> Option<(DubinsPath, Vec<(Pose2D, f64)>)> {
    for path in DubinsPath::candidates(from, to, r).into_iter().take(3) {
        if path.length() > max_len {
            break;
        }
        let samples = path.samples(step);
        let mut prev = from.position();
        if samples.iter().all(|(p, _)| {
            let ok = cm.segment_free(prev, p.position());
            prev = p.position();
            ok
        }) {
            return Some((path, samples));
        }
    }
    None
}

#[derive(Debug, Clone, Copy)]
pub struct SearchOptions {
    pub use_heuristic: bool,
    pub analytic_shot: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { use_heuristic: true, analytic_shot: true }
    }
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub trace: Trace,
    pub cost: f64,
    pub expanded: usize,
    /// Whether the trace ends exactly on the goal pose.
    pub exact: bool,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    pose: Pose2D,
    g: f64,
    parent: usize,
    kappa: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Open {
    f: f64,
    seq: usize,
    node: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, o: &Self) -> Ordering {
        o.f.total_cmp(&self.f).then(o.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

pub fn primitive_curvatures(params: &PlannerParams) -> [f64; 5] {
    let k = 1.0 / params.min_turn_radius;
    [0.0, 0.5 * k, -0.5 * k, k, -k]
}

/// Cost of driving `samples` (a primitive of length `len` at `kappa`).
fn edge_cost(cm: &Costmap, params: &PlannerParams, samples: &[Pose2D], kappa: f64, len: f64) -> f64 {
    let mean_cost = samples.iter().map(|p| cm.cost(p.position())).sum::<f64>() / samples.len().max(1) as f64;
    len + params.curvature_penalty * kappa.abs() * len + params.cost_weight * mean_cost * len
}

fn samples_cost(cm: &Costmap, params: &PlannerParams, from: &Pose2D, samples: &[(Pose2D, f64)]) -> f64 {
    let mut prev = *from;
    let mut cost = 0.0;
    for (p, k) in samples {
        let seg = prev.position().distance(p.position());
        cost += edge_cost(cm, params, std::slice::from_ref(p), *k, seg);
        prev = *p;
    }
    cost
}

/// Lower bound on the remaining cost to reach the goal region.
pub fn heuristic(p: &Pose2D, goal: &Pose2D, table: &GoalDistance, params: &PlannerParams) -> f64 {
    let e = p.position().distance(goal.position());
    (e.max(table.lower_bound(p.position())) - params.goal_tolerance).max(0.0)
}

fn bin_key(p: &Pose2D, params: &PlannerParams) -> u64 {
    let bx = ((p.x / params.bin_size).floor() as i64 + (1 << 20)) as u64 & 0xF_FFFF;
    let by = ((p.y / params.bin_size).floor() as i64 + (1 << 20)) as u64 & 0xF_FFFF;
    let tb = ((p.theta.rem_euclid(2.0 * std::f64::consts::PI) / (2.0 * std::f64::consts::PI)
        * params.heading_bins as f64)
        .floor() as u64)
        % params.heading_bins as u64;
    (bx << 40) | (by << 20) | tb
}

pub fn in_goal_region(p: &Pose2D, goal: &Pose2D, params: &PlannerParams) -> bool {
    p.position().distance(goal.position()) <= params.goal_tolerance
        && normalize_angle(p.theta - goal.theta).abs() <= params.goal_heading_tolerance
}

/// Search on a prepared costmap. `table` is the grid distance to `goal`.
pub fn search(
    cm: &Costmap,
    table: &GoalDistance,
    start: &Pose2D,
    goal: &Pose2D,
    params: &PlannerParams,
    opts: SearchOptions,
) -> Result<SearchResult, PlanError> {
    if cm.is_lethal(start.position()) {
        return Err(PlanError::StartBlocked);
    }
    if cm.is_lethal(goal.position()) {
        return Err(PlanError::GoalBlocked);
    }
    let h = |p: &Pose2D| if opts.use_heuristic { heuristic(p, goal, table, params) } else { 0.0 };
    let curvatures = primitive_curvatures(params);
    let r_min = params.min_turn_radius;
    let step = params.sample_step;

    let mut nodes = vec![Node { pose: *start, g: 0.0, parent: usize::MAX, kappa: 0.0 }];
    let mut best_g: HashMap<u64, f64> = HashMap::new();
    let mut closed: HashMap<u64, ()> = HashMap::new();
    let mut open = BinaryHeap::new();
    let mut seq = 0;
    open.push(Open { f: h(start), seq, node: 0 });
    best_g.insert(bin_key(start, params), 0.0);
    let mut expanded = 0;
    let mut last_shot = f64::INFINITY;

    while let Some(Open { node, .. }) = open.pop() {
        let cur = nodes[node];
        let key = bin_key(&cur.pose, params);
        if closed.insert(key, ()).is_some() {
            continue;
        }
        expanded += 1;
        if expanded > params.max_expansions {
            return Err(PlanError::ExpansionLimit { explored: expanded });
        }
        let dist = cur.pose.position().distance(goal.position());
        if in_goal_region(&cur.pose, goal, params) {
            let mut trace = reconstruct(&nodes, node, step);
            let mut cost = cur.g;
            let mut exact = false;
            if opts.analytic_shot {
                if let Some((_, samples)) = dubins_connect(cm, &cur.pose, goal, r_min, 3.0 * dist + 1.0, step) {
                    cost += samples_cost(cm, params, &cur.pose, &samples);
                    for (p, k) in samples {
                        trace.push(p, k);
                    }
                    exact = true;
                }
            }
            return Ok(SearchResult { trace, cost, expanded, exact });
        }
        if opts.analytic_shot && dist <= params.shot_distance && (dist < last_shot - 0.5 || expanded % 25 == 0) {
            last_shot = last_shot.min(dist);
            if let Some((_, samples)) = dubins_connect(cm, &cur.pose, goal, r_min, 1.5 * dist + 1.0, step) {
                let mut trace = reconstruct(&nodes, node, step);
                let cost = cur.g + samples_cost(cm, params, &cur.pose, &samples);
                for (p, k) in samples {
                    trace.push(p, k);
                }
                return Ok(SearchResult { trace, cost, expanded, exact: true });
            }
        }
        for &k in &curvatures {
            let samples = arc_samples(&cur.pose, k, params.primitive_arc, step);
            let end = *samples.last().unwrap();
            let ckey = bin_key(&end, params);
            if closed.contains_key(&ckey) {
                continue;
            }
            if !poly_free(cm, &cur.pose, &samples) {
                continue;
            }
            let hv = h(&end);
            if hv.is_infinite() {
                continue;
            }
            let g = cur.g + edge_cost(cm, params, &samples, k, params.primitive_arc);
            if best_g.get(&ckey).is_some_and(|&b| b <= g) {
                continue;
            }
            best_g.insert(ckey, g);
            nodes.push(Node { pose: end, g, parent: node, kappa: k });
            seq += 1;
            open.push(Open { f: g + hv, seq, node: nodes.len() - 1 });
        }
    }
    Err(PlanError::OpenSetExhausted { explored: expanded })
}

fn reconstruct(nodes: &[Node], last: usize, step: f64) -> Trace {
    let mut chain = Vec::new();
    let mut i = last;
    while i != usize::MAX {
        chain.push(i);
        i = nodes[i].parent;
    }
    chain.reverse();
    let mut trace = Trace::start(nodes[chain[0]].pose);
    for w in chain.windows(2) {
        let (a, b) = (nodes[w[0]], nodes[w[1]]);
        let len = arc_length_between(&a.pose, &b.pose, b.kappa);
        for p in arc_samples(&a.pose, b.kappa, len, step) {
            trace.push(p, b.kappa);
        }
    }
    trace
}

fn arc_length_between(a: &Pose2D, b: &Pose2D, kappa: f64) -> f64 {
    if kappa.abs() < 1e-12 {
        a.position().distance(b.position())
    } else {
        let dth = normalize_angle(b.theta - a.theta);
        (dth / kappa).abs()
    }
}

/// Point-to-point planning on a boundary grid.
pub fn plan_hybrid_astar(
    grid: &OccupancyGrid,
    start: &Pose2D,
    goal: &Pose2D,
    params: &PlannerParams,
) -> Result<PathPlan, PlanError> {
    params.validate(grid.resolution())?;
    let cm = Costmap::from_grid(grid, params.boundary_inflation, params.cost_band);
    if cm.is_lethal(goal.position()) {
        return Err(PlanError::GoalBlocked);
    }
    let table = cm.distance_to(goal.position());
    let res = search(&cm, &table, start, goal, params, SearchOptions::default())?;
    Ok(res.trace.to_path(false, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Cell;
    use crate::planners::path_metrics;

    fn empty(w: f64, h: f64, origin: Vec2) -> OccupancyGrid {
        let mut g = OccupancyGrid::new(0.1, origin, (w / 0.1) as usize, (h / 0.1) as usize).unwrap();
        g.fill(g.params().min);
        g
    }

    #[test]
    fn straight_goal() {
        let g = empty(30.0, 10.0, Vec2::new(-5.0, -5.0));
        let p = plan_hybrid_astar(&g, &Pose2D::IDENTITY, &Pose2D::new(20.0, 0.0, 0.0), &PlannerParams::default()).unwrap();
        let m = path_metrics(&p);
        assert!((m.distance - 20.0).abs() < 0.2, "{}", m.distance);
        assert!(m.total_curvature < 0.01, "{}", m.total_curvature);
    }

    /// Brute-force check of every occupied cell against points sampled at res/2.
    fn clear_of_inflated(g: &OccupancyGrid, path: &PathPlan, inflation: f64) -> bool {
        let occ: Vec<Vec2> =
            (0..g.cells().len()).filter(|&i| g.is_occupied_index(i)).map(|i| g.cell_to_world(g.cell_at(i))).collect();
        let res = g.resolution();
        for s in 0..path.segment_count() {
            let (a, b) = path.segment(s);
            let n = (a.distance(b) / (res / 2.0)).ceil().max(1.0) as usize;
            for k in 0..=n {
                let p = a.lerp(b, k as f64 / n as f64);
                let c = g.cell_to_world(g.cell_of(p));
                if occ.iter().any(|o| o.distance(c) < inflation - 1e-6) {
                    return false;
                }
            }
        }
        true
    }

    fn corner_corridor() -> OccupancyGrid {
        // L-shaped corridor 3 m wide: east along y in [0, 3], then north along x in [12, 15]
        let mut g = empty(24.0, 24.0, Vec2::new(-4.0, -4.0));
        let occ = g.params().max;
        let wall = |a: Vec2, b: Vec2, g: &mut OccupancyGrid| {
            let (ca, cb) = (g.cell_of(a), g.cell_of(b));
            crate::grid::bresenham_for_each(ca, cb, |c| {
                g.set_log_odds(c, occ);
            });
        };
        wall(Vec2::new(-2.0, 0.0), Vec2::new(15.0, 0.0), &mut g);
        wall(Vec2::new(15.0, 0.0), Vec2::new(15.0, 19.0), &mut g);
        wall(Vec2::new(-2.0, 3.0), Vec2::new(12.0, 3.0), &mut g);
        wall(Vec2::new(12.0, 3.0), Vec2::new(12.0, 19.0), &mut g);
        g
    }

    #[test]
    fn corner_respects_curvature_and_walls() {
        let g = corner_corridor();
        let params = PlannerParams::default();
        let p = plan_hybrid_astar(&g, &Pose2D::new(0.0, 1.5, 0.0), &Pose2D::new(13.5, 16.0, std::f64::consts::FRAC_PI_2), &params)
            .unwrap();
        assert!(p.max_abs_curvature() <= 1.0 / params.min_turn_radius + 1e-9);
        assert!(clear_of_inflated(&g, &p, params.boundary_inflation));
        let last = p.points.last().unwrap();
        assert!(last.position().distance(Vec2::new(13.5, 16.0)) < 1e-6);
    }

    #[test]
    fn goal_in_obstacle() {
        let mut g = empty(30.0, 10.0, Vec2::new(-5.0, -5.0));
        let c = g.cell_of(Vec2::new(10.0, 0.0));
        g.set_log_odds(c, g.params().max);
        let err = plan_hybrid_astar(&g, &Pose2D::IDENTITY, &Pose2D::new(10.0, 0.0, 0.0), &PlannerParams::default());
        assert!(matches!(err, Err(PlanError::GoalBlocked)));
    }

    #[test]
    fn walled_off_goal_exhausts() {
        let mut g = empty(30.0, 10.0, Vec2::new(-5.0, -5.0));
        for iy in 0..g.height() as i64 {
            g.set_log_odds(Cell { ix: 150, iy }, g.params().max);
        }
        let err = plan_hybrid_astar(&g, &Pose2D::IDENTITY, &Pose2D::new(20.0, 0.0, 0.0), &PlannerParams::default());
        assert!(matches!(err, Err(PlanError::OpenSetExhausted { .. })), "{err:?}");
    }

    #[test]
    fn bin_keys_separate_headings() {
        let p = PlannerParams::default();
        assert_ne!(bin_key(&Pose2D::new(1.0, 1.0, 0.01), &p), bin_key(&Pose2D::new(1.0, 1.0, 0.2), &p));
        assert_eq!(bin_key(&Pose2D::new(1.0, 1.0, 0.01), &p), bin_key(&Pose2D::new(1.1, 1.1, 0.02), &p));
    }

    #[test]
    fn heuristic_is_admissible_on_sampled_nodes() {
        use rand::{Rng, SeedableRng};
        // 6 m x 6 m room with a block in the middle
        let mut g = empty(6.0, 6.0, Vec2::new(0.0, 0.0));
        for ix in 25..35 {
            for iy in 10..40 {
                g.set_log_odds(Cell { ix, iy }, g.params().max);
            }
        }
        let params = PlannerParams {
            min_turn_radius: 1.0,
            primitive_arc: 0.5,
            boundary_inflation: 0.3,
            ..PlannerParams::default()
        };
        let cm = Costmap::from_grid(&g, params.boundary_inflation, params.cost_band);
        let goal = Pose2D::new(5.0, 3.0, std::f64::consts::FRAC_PI_2);
        let table = cm.distance_to(goal.position());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let exact = SearchOptions { use_heuristic: false, analytic_shot: false };
        // nodes from which the goal region is reachable at all
        let mut checked = 0;
        while checked < 1000 {
            let mut starts = Vec::new();
            while starts.len() < 250 {
                let p = Pose2D::new(rng.random_range(0.5..5.5), rng.random_range(0.5..5.5), rng.random_range(-3.1..3.1));
                if !cm.is_lethal(p.position()) {
                    starts.push(p);
                }
            }
            let results = crate::par::map(crate::par::Execution::Parallel, &starts, |s| {
                search(&cm, &table, s, &goal, &params, exact).ok().map(|r| (heuristic(s, &goal, &table, &params), r.cost))
            });
            for (h, cost) in results.into_iter().flatten() {
                assert!(h <= cost + 1e-9, "h {h} > cost {cost}");
                checked += 1;
            }
        }
    }
}
