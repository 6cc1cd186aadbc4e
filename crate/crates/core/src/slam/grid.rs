//! Occupancy-grid SLAM by correlative scan-to-map matching.
//!
//! The map keeps a smoothed likelihood field next to the log-odds cells. It is
//! refreshed only around cells touched by an integration, so matching cost
//! does not grow with map size.

use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_angle, Pose2D, Vec2};
use crate::grid::{bresenham_for_each, Cell, OccupancyGrid};
use crate::par::{self, Execution};
use crate::sensors::LaserScan;

pub const DEFAULT_RESOLUTION: f64 = 0.05;
const FIELD_RADIUS: i64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSlamConfig {
    pub resolution: f64,
    pub l_free: f32,
    pub l_occ: f32,
    pub window_xy: f64,
    pub window_theta: f64,
    pub rotation_step: f64,
    pub min_score: f64,
    pub keyscan_distance: f64,
    pub keyscan_rotation: f64,
    /// Map growth granularity, meters.
    pub grow_block: f64,
    pub matching_enabled: bool,
    pub execution: Execution,
}

impl Default for GridSlamConfig {
    fn default() -> Self {
        Self {
            resolution: DEFAULT_RESOLUTION,
            l_free: 0.4,
            l_occ: 0.85,
            window_xy: 0.3,
            window_theta: 0.05,
            rotation_step: 0.5f64.to_radians(),
            min_score: 0.3,
            keyscan_distance: 0.2,
            keyscan_rotation: 0.1,
            grow_block: 10.0,
            matching_enabled: true,
            execution: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchWindow {
    pub dx: f64,
    pub dtheta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchResult {
    pub pose: Pose2D,
    pub score: f64,
    pub degraded: bool,
}

fn sigmoid(l: f32) -> f32 {
    1.0 / (1.0 + (-l).exp())
}

/// Nearest hit centroid seen from a cell, relative to that cell's corner in
/// cell units, with its occupancy weight (0 = nothing in reach).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
struct Nearest {
    ox: f32,
    oy: f32,
    w: f32,
}

/// Log-odds map plus the likelihood field used for scoring.
///
/// Each occupied cell remembers the centroid of the beam endpoints that fell in
/// it. The field stores, per cell, the best centroid within two cells, so a
/// lookup is one fetch and one Gaussian at sub-cell precision.
#[derive(Debug, Clone)]
pub struct ScanMap {
    grid: OccupancyGrid,
    hits: Vec<[f32; 3]>,
    field: Vec<Nearest>,
    occupied: usize,
    w_ref: f32,
}

impl ScanMap {
    pub fn new(grid: OccupancyGrid) -> Self {
        let n = grid.cells().len();
        let mut m = Self { hits: vec![[0.0; 3]; n], field: vec![Nearest::default(); n], occupied: 0, grid, w_ref: sigmoid(0.85) };
        m.occupied = m.grid.occupied_count();
        // cells that arrive already occupied get a centred hit
        let all: Vec<Cell> = (0..n)
            .filter(|&i| m.grid.log_odds_at(i) > 0.0)
            .map(|i| {
                m.hits[i] = [0.5, 0.5, 1.0];
                m.grid.cell_at(i)
            })
            .collect();
        m.refresh(&all);
        m
    }

    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied
    }

    fn weight(&self, i: usize) -> f32 {
        let l = self.grid.log_odds_at(i);
        if l > 0.0 && self.hits[i][2] > 0.0 {
            (sigmoid(l) / self.w_ref).min(1.0)
        } else {
            0.0
        }
    }

    fn centroid(&self, i: usize) -> (f32, f32) {
        let h = self.hits[i];
        (h[0] / h[2], h[1] / h[2])
    }

    /// Recompute the field within reach of each dirty cell.
    fn refresh(&mut self, dirty: &[Cell]) {
        let mut targets: Vec<usize> = Vec::new();
        for &d in dirty {
            for ox in -FIELD_RADIUS..=FIELD_RADIUS {
                for oy in -FIELD_RADIUS..=FIELD_RADIUS {
                    if let Some(i) = self.grid.index(Cell::new(d.ix + ox, d.iy + oy)) {
                        targets.push(i);
                    }
                }
            }
        }
        targets.sort_unstable();
        targets.dedup();
        for i in targets {
            let own = self.weight(i);
            if own > 0.0 {
                let (ox, oy) = self.centroid(i);
                self.field[i] = Nearest { ox, oy, w: own };
                continue;
            }
            let c = self.grid.cell_at(i);
            let mut best = Nearest::default();
            let mut best_val = 0.0f32;
            for dx in -FIELD_RADIUS..=FIELD_RADIUS {
                for dy in -FIELD_RADIUS..=FIELD_RADIUS {
                    let Some(j) = self.grid.index(Cell::new(c.ix + dx, c.iy + dy)) else { continue };
                    let w = self.weight(j);
                    if w <= 0.0 {
                        continue;
                    }
                    let (cx, cy) = self.centroid(j);
                    let ox = dx as f32 + cx;
                    let oy = dy as f32 + cy;
                    let ex = ox - 0.5;
                    let ey = oy - 0.5;
                    let val = w * (-(ex * ex + ey * ey) / 2.0).exp();
                    if val > best_val {
                        best_val = val;
                        best = Nearest { ox, oy, w };
                    }
                }
            }
            self.field[i] = best;
        }
    }

    /// Likelihood of an obstacle at a world point, in [0, 1].
    pub fn likelihood(&self, p: Vec2) -> f64 {
        let res = self.grid.resolution();
        let o = self.grid.origin();
        let gx = (p.x - o.x) / res;
        let gy = (p.y - o.y) / res;
        let (fx, fy) = (gx.floor(), gy.floor());
        if fx < 0.0 || fy < 0.0 || fx >= self.grid.width() as f64 || fy >= self.grid.height() as f64 {
            return 0.0;
        }
        let e = self.field[fy as usize * self.grid.width() + fx as usize];
        if e.w <= 0.0 {
            return 0.0;
        }
        // sigma of one cell
        let ex = (gx - fx) as f32 - e.ox;
        let ey = (gy - fy) as f32 - e.oy;
        (e.w * (-(ex * ex + ey * ey) / 2.0).exp()) as f64
    }

    /// Mean likelihood of sensor-frame points placed at `pose`, in [0, 1].
    pub fn score(&self, pose: &Pose2D, points: &[Vec2]) -> f64 {
        if points.is_empty() {
            return 0.0;
        }
        points.iter().map(|&p| self.likelihood(pose.transform_point(p))).sum::<f64>() / points.len() as f64
    }

    fn ensure_contains(&mut self, p: Vec2, margin: f64, block: f64) {
        let (old_origin, old_w, old_h) = (self.grid.origin(), self.grid.width(), self.grid.height());
        if self.grid.grow_to_include(p, margin, block) {
            let res = self.grid.resolution();
            let sx = ((old_origin.x - self.grid.origin().x) / res).round() as usize;
            let sy = ((old_origin.y - self.grid.origin().y) / res).round() as usize;
            let w = self.grid.width();
            let n = w * self.grid.height();
            let mut hits = vec![[0.0f32; 3]; n];
            let mut field = vec![Nearest::default(); n];
            for y in 0..old_h {
                let dst = (y + sy) * w + sx;
                hits[dst..dst + old_w].copy_from_slice(&self.hits[y * old_w..(y + 1) * old_w]);
                field[dst..dst + old_w].copy_from_slice(&self.field[y * old_w..(y + 1) * old_w]);
            }
            self.hits = hits;
            self.field = field;
        }
    }

    /// Ray-trace every beam of `scan` from `pose` into the log-odds map.
    pub fn integrate(&mut self, pose: &Pose2D, scan: &LaserScan, l_free: f32, l_occ: f32, block: f64) {
        self.ensure_contains(pose.position(), scan.max_range + 1.0, block);
        let res = self.grid.resolution();
        let origin = self.grid.origin();
        let sensor = self.grid.cell_of(pose.position());
        let threshold = self.grid.params().occupied_threshold;
        let mut dirty = Vec::new();
        for i in 0..scan.ranges.len() {
            let hit = scan.is_return(i);
            let end_world = pose.transform_point(Vec2::from_polar(scan.ranges[i], scan.angle(i)));
            let end = self.grid.cell_of(end_world);
            let grid = &mut self.grid;
            let occupied = &mut self.occupied;
            let hits = &mut self.hits;
            let mut update = |c: Cell, delta: f32| {
                let Some(idx) = grid.index(c) else { return };
                let before = grid.log_odds_at(idx);
                grid.add_log_odds(c, delta);
                let after = grid.log_odds_at(idx);
                if (before > threshold) != (after > threshold) {
                    if after > threshold {
                        *occupied += 1;
                    } else {
                        *occupied -= 1;
                    }
                }
                if delta > 0.0 {
                    let ox = ((end_world.x - origin.x) / res - c.ix as f64) as f32;
                    let oy = ((end_world.y - origin.y) / res - c.iy as f64) as f32;
                    let h = &mut hits[idx];
                    h[0] += ox.clamp(0.0, 1.0);
                    h[1] += oy.clamp(0.0, 1.0);
                    h[2] += 1.0;
                }
                dirty.push(c);
            };
            bresenham_for_each(sensor, end, |c| {
                if c == sensor {
                    return;
                }
                if hit && c == end {
                    update(c, l_occ);
                } else {
                    update(c, -l_free);
                }
            });
        }
        // only cells near obstacles can change the field
        dirty.retain(|&c| {
            let i = self.grid.index(c).unwrap();
            self.hits[i][2] > 0.0
        });
        self.refresh(&dirty);
    }
}

fn steps(window: f64, step: f64) -> Vec<f64> {
    let n = (window / step).round() as i64;
    (-n..=n).map(|k| k as f64 * step).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    score: f64,
    dx: f64,
    dy: f64,
    dtheta: f64,
}

impl Candidate {
    /// Higher score wins; ties go to the smallest |dθ|, then |dx|, then |dy|.
    fn better_than(&self, o: &Candidate) -> bool {
        if self.score != o.score {
            return self.score > o.score;
        }
        let key = |c: &Candidate| [c.dtheta.abs(), c.dx.abs(), c.dy.abs(), c.dtheta, c.dx, c.dy];
        let (a, b) = (key(self), key(o));
        for k in 0..a.len() {
            if a[k] != b[k] {
                return a[k] < b[k];
            }
        }
        false
    }
}

fn best_of(cands: impl IntoIterator<Item = Candidate>) -> Option<Candidate> {
    cands.into_iter().fold(None, |best: Option<Candidate>, c| match best {
        Some(b) if !c.better_than(&b) => Some(b),
        _ => Some(c),
    })
}

fn search(
    map: &ScanMap,
    points: &[Vec2],
    prior: &Pose2D,
    center: (f64, f64, f64),
    rotations: &[f64],
    translations: &[f64],
    exec: Execution,
) -> Option<Candidate> {
    let per_rotation = par::map(exec, rotations, |&dth| {
        let theta = prior.theta + center.2 + dth;
        let (s, c) = theta.sin_cos();
        let rotated: Vec<Vec2> = points.iter().map(|p| Vec2::new(c * p.x - s * p.y, s * p.x + c * p.y)).collect();
        let mut best: Option<Candidate> = None;
        for &ox in translations {
            for &oy in translations {
                let dx = center.0 + ox;
                let dy = center.1 + oy;
                let base = Vec2::new(prior.x + dx, prior.y + dy);
                let score = rotated.iter().map(|&p| map.likelihood(base + p)).sum::<f64>() / rotated.len() as f64;
                let cand = Candidate { score, dx, dy, dtheta: center.2 + dth };
                if best.is_none_or(|b| cand.better_than(&b)) {
                    best = Some(cand);
                }
            }
        }
        best
    });
    best_of(per_rotation.into_iter().flatten())
}

/// Exhaustive correlative search around `prior`, then one half-step refinement.
pub fn scan_match(map: &ScanMap, scan: &LaserScan, prior: &Pose2D, window: SearchWindow, cfg: &GridSlamConfig) -> MatchResult {
    let points = scan.points();
    let degraded = MatchResult { pose: *prior, score: 0.0, degraded: true };
    if map.occupied_count() == 0 || points.is_empty() {
        return degraded;
    }
    let res = map.grid().resolution();
    let rot = steps(window.dtheta, cfg.rotation_step);
    let trans = steps(window.dx, res);
    let Some(coarse) = search(map, &points, prior, (0.0, 0.0, 0.0), &rot, &trans, cfg.execution) else {
        return degraded;
    };
    let half_r = [-0.5 * cfg.rotation_step, 0.0, 0.5 * cfg.rotation_step];
    let half_t = [-0.5 * res, 0.0, 0.5 * res];
    let best = match search(map, &points, prior, (coarse.dx, coarse.dy, coarse.dtheta), &half_r, &half_t, cfg.execution) {
        Some(f) if f.better_than(&coarse) => f,
        _ => coarse,
    };
    let pose = Pose2D::new(prior.x + best.dx, prior.y + best.dy, normalize_angle(prior.theta + best.dtheta));
    if best.score < cfg.min_score {
        return MatchResult { pose: *prior, score: best.score, degraded: true };
    }
    MatchResult { pose, score: best.score, degraded: false }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridStep {
    pub pose: Pose2D,
    pub score: f64,
    pub degraded: bool,
    pub integrated: bool,
}

#[derive(Debug, Clone)]
pub struct GridSlam {
    cfg: GridSlamConfig,
    map: Option<ScanMap>,
    pose: Pose2D,
    last_integrated: Pose2D,
    last_odom: Option<Pose2D>,
    stamp: f64,
    degraded_count: u64,
    anchor: Option<Pose2D>,
}

impl GridSlam {
    pub fn new(cfg: GridSlamConfig) -> Self {
        Self {
            cfg,
            map: None,
            pose: Pose2D::IDENTITY,
            last_integrated: Pose2D::IDENTITY,
            last_odom: None,
            stamp: 0.0,
            degraded_count: 0,
            anchor: None,
        }
    }

    /// Map frame fixed at a known start pose instead of the first odometry.
    pub fn with_initial(cfg: GridSlamConfig, start: Pose2D) -> Self {
        Self { anchor: Some(start), ..Self::new(cfg) }
    }

    pub fn config(&self) -> &GridSlamConfig {
        &self.cfg
    }

    pub fn map(&self) -> Option<&ScanMap> {
        self.map.as_ref()
    }

    pub fn pose(&self) -> Option<(Pose2D, f64)> {
        self.last_odom.map(|_| (self.pose, self.stamp))
    }

    pub fn degraded_count(&self) -> u64 {
        self.degraded_count
    }

    fn integrate(&mut self, scan: &LaserScan) {
        let pose = self.pose;
        let cfg = self.cfg;
        let map = self.map.get_or_insert_with(|| {
            let half = scan.max_range + 2.0;
            let cells = (2.0 * half / cfg.resolution).ceil() as usize;
            let origin = Vec2::new(pose.x - half, pose.y - half);
            ScanMap::new(OccupancyGrid::new(cfg.resolution, origin, cells, cells).expect("valid grid"))
        });
        map.integrate(&pose, scan, cfg.l_free, cfg.l_occ, cfg.grow_block);
        self.last_integrated = pose;
    }

    /// One SLAM step: odometry prior, scan match, keyscan integration.
    pub fn step(&mut self, odom: &Pose2D, t: f64, scan: &LaserScan) -> GridStep {
        let Some(prev) = self.last_odom else {
            self.pose = self.anchor.unwrap_or(*odom);
            self.last_odom = Some(*odom);
            self.stamp = t;
            self.integrate(scan);
            return GridStep { pose: self.pose, score: 0.0, degraded: false, integrated: true };
        };
        let prior = self.pose.compose(&prev.between(odom));
        self.last_odom = Some(*odom);
        self.stamp = t;
        let (pose, score, degraded) = match (&self.map, self.cfg.matching_enabled) {
            (Some(map), true) => {
                let window = SearchWindow { dx: self.cfg.window_xy, dtheta: self.cfg.window_theta };
                let m = scan_match(map, scan, &prior, window, &self.cfg);
                (m.pose, m.score, m.degraded)
            }
            _ => (prior, 0.0, false),
        };
        if degraded {
            self.degraded_count += 1;
        }
        self.pose = pose;
        let moved = self.last_integrated.between(&pose);
        let integrated =
            moved.position().norm() >= self.cfg.keyscan_distance || moved.theta.abs() >= self.cfg.keyscan_rotation;
        if integrated {
            self.integrate(scan);
        }
        GridStep { pose, score, degraded, integrated }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::{Cone, ConeColor};
    use crate::sensors::{render_scan, NoiseConfig, SensorConfig};
    use crate::vehicle::VehicleState;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cones() -> Vec<Cone> {
        let mut v = Vec::new();
        for k in 0..8 {
            let x = -6.0 + 3.5 * k as f64;
            v.push(Cone::new(x, 2.2 + 0.1 * (k % 3) as f64, ConeColor::Blue));
            v.push(Cone::new(x + 1.3, -2.0 - 0.15 * (k % 2) as f64, ConeColor::Yellow));
        }
        v.push(Cone::new(9.0, 0.4, ConeColor::OrangeLarge));
        v
    }

    fn scan_from(pose: Pose2D, cones: &[Cone]) -> LaserScan {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        render_scan(&VehicleState::at_rest(pose), cones, &NoiseConfig::zero(), &SensorConfig::default(), &mut rng)
    }

    fn mapped(cones: &[Cone]) -> ScanMap {
        let grid = OccupancyGrid::new(0.05, Vec2::new(-30.0, -30.0), 1200, 1200).unwrap();
        let mut map = ScanMap::new(grid);
        for x in [-2.0, 0.0, 2.0] {
            let p = Pose2D::new(x, 0.0, 0.0);
            map.integrate(&p, &scan_from(p, cones), 0.4, 0.85, 10.0);
        }
        map
    }

    #[test]
    fn self_consistent_match() {
        let c = cones();
        let map = mapped(&c);
        let p = Pose2D::new(0.0, 0.0, 0.0);
        let m = scan_match(&map, &scan_from(p, &c), &p, SearchWindow { dx: 0.3, dtheta: 0.05 }, &GridSlamConfig::default());
        assert!(!m.degraded);
        assert!(m.pose.position().distance(p.position()) < 0.025 && m.pose.theta.abs() < 0.005, "{:?}", m.pose);
    }

    #[test]
    fn render_and_recover() {
        let c = cones();
        let map = mapped(&c);
        for exec in [Execution::Parallel, Execution::Sequential] {
            let cfg = GridSlamConfig { execution: exec, ..Default::default() };
            let p = Pose2D::new(1.0, 0.1, 0.02);
            let prior = p.compose(&Pose2D::new(0.08, 0.04, 0.01));
            let m = scan_match(&map, &scan_from(p, &c), &prior, SearchWindow { dx: 0.3, dtheta: 0.05 }, &cfg);
            assert!(!m.degraded);
            assert!((m.pose.x - p.x).abs() < 0.025 && (m.pose.y - p.y).abs() < 0.025, "{:?}", m.pose);
            assert!((m.pose.theta - p.theta).abs() < 0.005, "{:?}", m.pose);
        }
    }

    #[test]
    fn empty_map_degrades() {
        let map = ScanMap::new(OccupancyGrid::new(0.05, Vec2::new(-5.0, -5.0), 200, 200).unwrap());
        let p = Pose2D::new(0.3, 0.0, 0.1);
        let m = scan_match(&map, &scan_from(p, &cones()), &p, SearchWindow { dx: 0.3, dtheta: 0.05 }, &GridSlamConfig::default());
        assert!(m.degraded);
        assert_eq!(m.pose, p);
    }

    fn single_ray(range: f64, max_range: f64) -> LaserScan {
        LaserScan { angle_min: 0.0, angle_max: std::f64::consts::PI, angle_increment: std::f64::consts::PI, max_range, ranges: vec![range] }
    }

    #[test]
    fn single_ray_cell_counts() {
        let mut map = ScanMap::new(OccupancyGrid::new(0.05, Vec2::new(-1.0, -1.0), 200, 200).unwrap());
        map.integrate(&Pose2D::new(0.0, 0.0, 0.0), &single_ray(1.0, 20.0), 0.4, 0.85, 10.0);
        let cells = map.grid().cells();
        let free = cells.iter().filter(|&&l| l == -0.4).count();
        let occ = cells.iter().filter(|&&l| l == 0.85).count();
        assert_eq!((free, occ), (19, 1));
        // same scan again: endpoint exactly doubles
        map.integrate(&Pose2D::new(0.0, 0.0, 0.0), &single_ray(1.0, 20.0), 0.4, 0.85, 10.0);
        let end = map.grid().cell_of(Vec2::new(1.0, 0.0));
        assert_eq!(map.grid().log_odds(end), Some(1.7));
    }

    #[test]
    fn no_return_ray_only_carves() {
        let mut map = ScanMap::new(OccupancyGrid::new(0.05, Vec2::new(-1.0, -1.0), 200, 200).unwrap());
        map.integrate(&Pose2D::new(0.0, 0.0, 0.0), &single_ray(5.0, 5.0), 0.4, 0.85, 10.0);
        let cells = map.grid().cells();
        assert_eq!(cells.iter().filter(|&&l| l > 0.0).count(), 0);
        assert_eq!(cells.iter().filter(|&&l| l < 0.0).count(), 100);
        assert!(map.grid().width() * map.grid().height() == cells.len());
    }

    #[test]
    fn stationary_fixed_point() {
        let c = cones();
        let mut slam = GridSlam::new(GridSlamConfig::default());
        let p = Pose2D::new(0.0, 0.0, 0.0);
        let scan = scan_from(p, &c);
        for k in 0..100 {
            let r = slam.step(&p, k as f64 * 0.1, &scan);
            assert!(r.pose.position().norm() < 1e-6 && r.pose.theta.abs() < 1e-6);
        }
    }

    #[test]
    fn translation_equivariance() {
        let c = cones();
        let shift = Vec2::new(2.0, -1.5); // grid aligned
        let shifted: Vec<Cone> = c.iter().map(|k| Cone::at(k.position() + shift, k.color)).collect();
        let map_a = mapped(&c);
        let grid_b = OccupancyGrid::new(0.05, Vec2::new(-30.0, -30.0) + shift, 1200, 1200).unwrap();
        let mut map_b = ScanMap::new(grid_b);
        for x in [-2.0, 0.0, 2.0] {
            let p = Pose2D::new(x + shift.x, shift.y, 0.0);
            map_b.integrate(&p, &scan_from(p, &shifted), 0.4, 0.85, 10.0);
        }
        let cfg = GridSlamConfig::default();
        let w = SearchWindow { dx: 0.3, dtheta: 0.05 };
        let truth = Pose2D::new(0.5, 0.0, 0.01);
        let prior = Pose2D::new(0.6, -0.05, 0.0);
        let a = scan_match(&map_a, &scan_from(truth, &c), &prior, w, &cfg);
        let tb = Pose2D::new(truth.x + shift.x, truth.y + shift.y, truth.theta);
        let pb = Pose2D::new(prior.x + shift.x, prior.y + shift.y, prior.theta);
        let b = scan_match(&map_b, &scan_from(tb, &shifted), &pb, w, &cfg);
        assert!((b.pose.x - a.pose.x - shift.x).abs() < 1e-6);
        assert!((b.pose.y - a.pose.y - shift.y).abs() < 1e-6);
        assert!((b.pose.theta - a.pose.theta).abs() < 1e-12);
    }

    #[test]
    fn log_odds_clamped_and_growth_consistent() {
        let c = cones();
        let mut map = ScanMap::new(OccupancyGrid::new(0.05, Vec2::new(-1.0, -1.0), 40, 40).unwrap());
        let p = Pose2D::new(0.0, 0.0, 0.0);
        let scan = scan_from(p, &c);
        for _ in 0..10 {
            map.integrate(&p, &scan, 0.4, 0.85, 10.0);
        }
        let g = map.grid();
        assert_eq!(g.cells().len(), g.width() * g.height());
        assert!(g.cells().iter().all(|&l| (-4.0..=4.0).contains(&l)));
        assert!(map.occupied_count() > 0);
        assert_eq!(map.occupied_count(), g.occupied_count());
    }
}
