//! Cone registry and boundary interpolation.
//!
//! Detections are projected with the SLAM pose and merged into a registry of
//! colored cones. Confirmed cones are chained into left and right boundaries,
//! which are rasterized into a planner occupancy grid.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cone::{Cone, ConeColor, ConeMapFile};
use crate::geometry::{normalize_angle, Pose2D, Vec2};
use crate::grid::{bresenham_for_each, OccupancyGrid};
use crate::sensors::ConeDetection;

pub const MATCH_RADIUS: f64 = 1.5;
pub const HOP_BOUND: f64 = 6.0;
pub const BOUNDARY_RESOLUTION: f64 = 0.1;
pub const GRID_MARGIN: f64 = 2.0;
/// Largest turn between consecutive hops while chaining.
pub const MAX_CHAIN_TURN: f64 = 100.0 * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegistryConfig {
    pub match_radius: f64,
    /// Averaging window; `None` is the plain running mean.
    pub window: Option<u32>,
    pub color_gated: bool,
    /// A detection this close to an entry of another color votes for that
    /// entry instead of spawning a new one. 0 disables.
    pub cross_color_radius: f64,
    /// Observations before an entry is trusted for boundaries and metrics.
    pub min_observations: u32,
    /// When the last few observations agree with each other but sit farther
    /// than this from the entry, the entry jumps to them (a moved cone).
    /// 0 disables.
    pub relocate_radius: f64,
}

impl Default for RegistryConfig {
    fn default() -> Self {
        Self { match_radius: MATCH_RADIUS, window: Some(20), color_gated: true, cross_color_radius: 0.5, min_observations: 3, relocate_radius: 0.2 }
    }
}

impl RegistryConfig {
    /// Plain count-weighted running mean, every entry trusted.
    pub fn running_mean() -> Self {
        Self { window: None, cross_color_radius: 0.0, min_observations: 1, relocate_radius: 0.0, ..Default::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub position: Vec2,
    pub color: ConeColor,
    pub observation_count: u32,
    pub votes: [u32; 3],
    /// Most recent observations, oldest first once full.
    #[serde(default)]
    pub recent: [Vec2; RECENT],
    #[serde(default)]
    pub recent_len: u8,
}

/// Observations used by the relocation test.
pub const RECENT: usize = 4;

impl RegistryEntry {
    fn new(position: Vec2, color: ConeColor) -> Self {
        let mut votes = [0; 3];
        votes[color.index()] = 1;
        Self { position, color, observation_count: 1, votes, recent: [position; RECENT], recent_len: 1 }
    }

    fn remember(&mut self, obs: Vec2) {
        let n = self.recent_len as usize;
        if n < RECENT {
            self.recent[n] = obs;
            self.recent_len += 1;
        } else {
            self.recent.rotate_left(1);
            self.recent[RECENT - 1] = obs;
        }
    }

    /// Mean of the recent observations if they are mutually consistent and
    /// together disagree with the current position.
    fn relocation(&self, radius: f64) -> Option<Vec2> {
        if radius <= 0.0 || (self.recent_len as usize) < RECENT {
            return None;
        }
        let m = self.recent.iter().fold(Vec2::ZERO, |a, &p| a + p) * (1.0 / RECENT as f64);
        let tight = self.recent.iter().all(|p| p.distance(m) < radius);
        let away = m.distance(self.position) > radius;
        (tight && away).then_some(m)
    }

    fn recolor(&mut self) {
        let mut best = self.color.index();
        for (i, &v) in self.votes.iter().enumerate() {
            if v > self.votes[best] {
                best = i;
            }
        }
        self.color = ConeColor::ALL[best];
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConeRegistry {
    pub entries: Vec<RegistryEntry>,
    pub config: RegistryConfig,
}

impl ConeRegistry {
    pub fn new(config: RegistryConfig) -> Self {
        Self { entries: Vec::new(), config }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_confirmed(&self, e: &RegistryEntry) -> bool {
        e.observation_count >= self.config.min_observations
    }

    pub fn confirmed(&self) -> impl Iterator<Item = &RegistryEntry> {
        self.entries.iter().filter(|e| self.is_confirmed(e))
    }

    pub fn confirmed_cones(&self) -> Vec<Cone> {
        self.confirmed().map(|e| Cone::at(e.position, e.color)).collect()
    }

    pub fn confirmed_of(&self, color: ConeColor) -> Vec<Vec2> {
        self.confirmed().filter(|e| e.color == color).map(|e| e.position).collect()
    }

    /// Registry with every entry trusted (e.g. built from a ground-truth list).
    pub fn from_cones(cones: &[Cone]) -> Self {
        let mut r = Self::new(RegistryConfig { min_observations: 1, ..Default::default() });
        r.entries = cones.iter().map(|c| RegistryEntry::new(c.position(), c.color)).collect();
        r
    }

    pub fn to_file(&self, name: &str) -> ConeMapFile {
        ConeMapFile::new(name, self.confirmed_cones())
    }

    fn nearest(&self, p: Vec2, color: Option<ConeColor>, radius: f64) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, e) in self.entries.iter().enumerate() {
            if color.is_some_and(|c| c != e.color) {
                continue;
            }
            let d = e.position.distance(p);
            if d <= radius && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best.map(|(i, _)| i)
    }

    fn absorb(&mut self, i: usize, obs: Vec2, color: ConeColor, bias: Vec2) {
        let window = self.config.window;
        let e = &mut self.entries[i];
        let n = match window {
            Some(w) => e.observation_count.min(w.saturating_sub(1).max(1)),
            None => e.observation_count,
        } as f64;
        e.remember(obs - bias);
        if let Some(m) = e.relocation(self.config.relocate_radius) {
            e.position = m;
        } else {
            e.position = (e.position * n + obs) * (1.0 / (n + 1.0));
        }
        e.observation_count += 1;
        e.votes[color.index()] += 1;
        e.recolor();
    }

    /// Merge one world-frame observation.
    pub fn observe(&mut self, obs: Vec2, color: ConeColor) {
        self.observe_with_bias(obs, color, Vec2::ZERO);
    }

    /// As `observe`, with `bias` (the shift shared by the whole frame) taken
    /// out before the observation is checked for relocation.
    pub fn observe_with_bias(&mut self, obs: Vec2, color: ConeColor, bias: Vec2) {
        let gate = if self.config.color_gated { Some(color) } else { None };
        if let Some(i) = self.nearest(obs, gate, self.config.match_radius) {
            self.absorb(i, obs, color, bias);
            self.merge_around(i);
        } else if let Some(i) =
            (self.config.cross_color_radius > 0.0).then(|| self.nearest(obs, None, self.config.cross_color_radius)).flatten()
        {
            self.absorb(i, obs, color, bias);
            self.merge_around(i);
        } else {
            self.entries.push(RegistryEntry::new(obs, color));
        }
    }

    /// Keep same-color entries at least the match radius apart.
    fn merge_around(&mut self, i: usize) {
        let mut i = i;
        loop {
            let e = self.entries[i];
            let other = self.entries.iter().enumerate().position(|(j, o)| {
                j != i && o.color == e.color && o.position.distance(e.position) < self.config.match_radius
            });
            let Some(j) = other else { return };
            let o = self.entries[j];
            let (na, nb) = (e.observation_count as f64, o.observation_count as f64);
            let keep = i.min(j);
            let merged = RegistryEntry {
                position: (e.position * na + o.position * nb) * (1.0 / (na + nb)),
                color: e.color,
                observation_count: e.observation_count + o.observation_count,
                votes: [e.votes[0] + o.votes[0], e.votes[1] + o.votes[1], e.votes[2] + o.votes[2]],
                recent: e.recent,
                recent_len: e.recent_len,
            };
            self.entries[keep] = merged;
            self.entries.remove(i.max(j));
            self.entries[keep].recolor();
            i = keep;
        }
    }
}

/// Project detections with the vehicle pose and merge them into the registry.
pub fn register_cones(reg: &mut ConeRegistry, detections: &[ConeDetection], pose: &Pose2D) {
    let world: Vec<(Vec2, ConeColor)> = detections.iter().map(|d| (pose.transform_point(d.local_position()), d.color)).collect();
    let bias = frame_bias(reg, &world);
    for (obs, color) in world {
        reg.observe_with_bias(obs, color, bias);
    }
}

/// Component-wise median offset of a frame against its matched entries, so
/// pose error common to every cone is not mistaken for a moved cone.
fn frame_bias(reg: &ConeRegistry, world: &[(Vec2, ConeColor)]) -> Vec2 {
    let (mut dx, mut dy) = (Vec::new(), Vec::new());
    for &(obs, color) in world {
        let gate = reg.config.color_gated.then_some(color);
        if let Some(i) = reg.nearest(obs, gate, reg.config.match_radius) {
            let d = obs - reg.entries[i].position;
            dx.push(d.x);
            dy.push(d.y);
        }
    }
    if dx.len() < 3 {
        return Vec2::ZERO;
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
    };
    Vec2::new(median(&mut dx), median(&mut dy))
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderedBoundary {
    pub cones: Vec<Vec2>,
    pub closed: bool,
    /// Set when cones were left out of the chain.
    pub gap: bool,
    /// Last chained cone before the break, if any.
    pub gap_at: Option<Vec2>,
}

/// Chain cones by nearest neighbour from the cone nearest `start`.
pub fn order_cones(cones: &[Vec2], start: &Pose2D) -> OrderedBoundary {
    let n = cones.len();
    if n == 0 {
        return OrderedBoundary { cones: Vec::new(), closed: false, gap: false, gap_at: None };
    }
    let mut used = vec![false; n];
    let first = (0..n)
        .min_by(|&a, &b| cones[a].distance(start.position()).total_cmp(&cones[b].distance(start.position())).then(a.cmp(&b)))
        .unwrap();
    used[first] = true;
    let mut chain = vec![first];
    let heading = start.heading();
    loop {
        let cur = *chain.last().unwrap();
        let prev_dir = if chain.len() >= 2 { Some(cones[cur] - cones[chain[chain.len() - 2]]) } else { None };
        let admissible = |j: usize| -> bool {
            let d = cones[j] - cones[cur];
            if d.norm() > HOP_BOUND {
                return false;
            }
            match prev_dir {
                Some(p) => p.dot(d) >= p.norm() * d.norm() * MAX_CHAIN_TURN.cos(),
                None => true,
            }
        };
        let nearest = |filter: &dyn Fn(usize) -> bool| -> Option<usize> {
            (0..n)
                .filter(|&j| !used[j] && admissible(j) && filter(j))
                .min_by(|&a, &b| cones[a].distance(cones[cur]).total_cmp(&cones[b].distance(cones[cur])).then(a.cmp(&b)))
        };
        let next = if prev_dir.is_none() {
            nearest(&|j| (cones[j] - cones[cur]).dot(heading) > 0.0).or_else(|| nearest(&|_| true))
        } else {
            nearest(&|_| true)
        };
        match next {
            Some(j) => {
                used[j] = true;
                chain.push(j);
            }
            None => break,
        }
    }
    let ordered: Vec<Vec2> = chain.iter().map(|&i| cones[i]).collect();
    let closed = ordered.len() >= 3 && ordered[ordered.len() - 1].distance(ordered[0]) <= HOP_BOUND;
    let gap = used.iter().any(|u| !u);
    let gap_at = gap.then(|| *ordered.last().unwrap());
    OrderedBoundary { cones: ordered, closed, gap, gap_at }
}

pub fn order_boundary(reg: &ConeRegistry, color: ConeColor, start: &Pose2D) -> OrderedBoundary {
    order_cones(&reg.confirmed_of(color), start)
}

#[derive(Debug, Error, PartialEq)]
pub enum ConeMapError {
    #[error("{color:?} boundary has only {count} cones")]
    TooFewCones { color: ConeColor, count: usize },
    #[error("{color:?} boundary chain breaks near ({x:.2}, {y:.2})")]
    Gap { color: ConeColor, x: f64, y: f64 },
}

/// Both boundaries chained and checked.
pub fn boundaries(reg: &ConeRegistry, start: &Pose2D) -> Result<[OrderedBoundary; 2], ConeMapError> {
    let mut out = Vec::with_capacity(2);
    for color in [ConeColor::Blue, ConeColor::Yellow] {
        let cones = reg.confirmed_of(color);
        if cones.len() < 3 {
            return Err(ConeMapError::TooFewCones { color, count: cones.len() });
        }
        let b = order_cones(&cones, start);
        if b.gap {
            let at = b.gap_at.unwrap_or(Vec2::ZERO);
            return Err(ConeMapError::Gap { color, x: at.x, y: at.y });
        }
        out.push(b);
    }
    let yellow = out.pop().unwrap();
    let blue = out.pop().unwrap();
    Ok([blue, yellow])
}

/// Pose at the centre of the orange cones, facing the driving direction
/// (blue boundary on the left). Needs orange, blue and yellow entries.
pub fn infer_start_pose(reg: &ConeRegistry) -> Option<Pose2D> {
    let orange = reg.confirmed_of(ConeColor::OrangeLarge);
    if orange.is_empty() {
        return None;
    }
    let c = orange.iter().fold(Vec2::ZERO, |a, &p| a + p) * (1.0 / orange.len() as f64);
    let nearest = |color| reg.confirmed_of(color).into_iter().min_by(|a: &Vec2, b: &Vec2| a.distance(c).total_cmp(&b.distance(c)));
    let (b, y) = (nearest(ConeColor::Blue)?, nearest(ConeColor::Yellow)?);
    Some(Pose2D::new(c.x, c.y, normalize_angle((b - y).angle() - std::f64::consts::FRAC_PI_2)))
}

/// Mark every cell on the polyline through `cones` as occupied.
pub fn rasterize_boundary(grid: &mut OccupancyGrid, cones: &[Vec2], closed: bool) {
    let occ = grid.params().max;
    let segs = if closed { cones.len() } else { cones.len().saturating_sub(1) };
    for i in 0..segs {
        let a = grid.cell_of(cones[i]);
        let b = grid.cell_of(cones[(i + 1) % cones.len()]);
        bresenham_for_each(a, b, |c| {
            grid.set_log_odds(c, occ);
        });
    }
}

pub fn empty_grid_around(points: &[Vec2], resolution: f64, margin: f64) -> OccupancyGrid {
    let (mut lo, mut hi) = (Vec2::new(f64::INFINITY, f64::INFINITY), Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for p in points {
        lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
        hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
    }
    let origin = Vec2::new(((lo.x - margin) / resolution).floor() * resolution, ((lo.y - margin) / resolution).floor() * resolution);
    let w = ((hi.x + margin - origin.x) / resolution).ceil() as usize + 1;
    let h = ((hi.y + margin - origin.y) / resolution).ceil() as usize + 1;
    let mut g = OccupancyGrid::new(resolution, origin, w, h).expect("valid grid");
    let free = g.params().min;
    g.fill(free);
    g
}

/// Planner grid: interpolated boundary walls occupied, everything else free.
pub fn build_boundary_grid(reg: &ConeRegistry, resolution: f64, start: &Pose2D) -> Result<OccupancyGrid, ConeMapError> {
    let [blue, yellow] = boundaries(reg, start)?;
    let all: Vec<Vec2> = blue.cones.iter().chain(yellow.cones.iter()).copied().collect();
    let mut grid = empty_grid_around(&all, resolution, GRID_MARGIN);
    rasterize_boundary(&mut grid, &blue.cones, blue.closed);
    rasterize_boundary(&mut grid, &yellow.cones, yellow.closed);
    Ok(grid)
}

/// Start/finish segment from the confirmed orange cones.
pub fn start_line(reg: &ConeRegistry, start: &Pose2D) -> Option<(Vec2, Vec2)> {
    crate::track::start_line_from(&reg.confirmed_of(ConeColor::OrangeLarge), start)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Cell;
    use crate::track::{generate_track, TrackSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn running_mean_examples() {
        let mut reg = ConeRegistry::new(RegistryConfig::running_mean());
        reg.observe(Vec2::new(10.0, 5.0), ConeColor::Blue);
        reg.observe(Vec2::new(10.5, 5.0), ConeColor::Blue);
        assert_eq!(reg.len(), 1);
        assert_eq!(reg.entries[0].position, Vec2::new(10.25, 5.0));
        assert_eq!(reg.entries[0].observation_count, 2);

        let mut reg = ConeRegistry::new(RegistryConfig::default());
        reg.observe(Vec2::new(10.0, 5.0), ConeColor::Blue);
        reg.observe(Vec2::new(10.5, 5.0), ConeColor::Blue);
        assert_eq!(reg.entries[0].position, Vec2::new(10.25, 5.0));
        reg.observe(Vec2::new(12.0, 5.0), ConeColor::Blue);
        assert_eq!(reg.len(), 2);
    }

    #[test]
    fn beyond_radius_adds_entry() {
        let mut reg = ConeRegistry::new(RegistryConfig::running_mean());
        reg.observe(Vec2::new(10.0, 5.0), ConeColor::Blue);
        reg.observe(Vec2::new(12.0, 5.0), ConeColor::Blue);
        assert_eq!(reg.len(), 2);
    }

    #[test]
    fn color_gate() {
        let mut reg = ConeRegistry::new(RegistryConfig::running_mean());
        reg.observe(Vec2::new(0.0, 0.0), ConeColor::Blue);
        reg.observe(Vec2::new(0.3, 0.0), ConeColor::Yellow);
        assert_eq!(reg.len(), 2);
        // a stray vote absorbed into the nearby entry by default
        let mut reg = ConeRegistry::new(RegistryConfig::default());
        reg.observe(Vec2::new(0.0, 0.0), ConeColor::Blue);
        reg.observe(Vec2::new(0.1, 0.0), ConeColor::Blue);
        reg.observe(Vec2::new(0.3, 0.0), ConeColor::Yellow);
        assert_eq!(reg.len(), 1);
        assert_eq!(reg.entries[0].color, ConeColor::Blue);
    }

    fn lln(config: RegistryConfig) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = Normal::new(0.0, 0.05).unwrap();
        let mut reg = ConeRegistry::new(config);
        for _ in 0..100 {
            reg.observe(Vec2::new(10.0 + n.sample(&mut rng), 5.0 + n.sample(&mut rng)), ConeColor::Yellow);
        }
        assert_eq!(reg.len(), 1);
        reg.entries[0].position.distance(Vec2::new(10.0, 5.0))
    }

    #[test]
    fn many_noisy_observations_converge() {
        assert!(lln(RegistryConfig::running_mean()) < 0.02);
        assert!(lln(RegistryConfig::default()) < 0.02);
    }

    #[test]
    fn permutation_insensitive_exact_matches() {
        let truth: Vec<Vec2> = (0..6).map(|i| Vec2::new(4.0 * i as f64, (i % 2) as f64 * 3.0)).collect();
        let mut obs = Vec::new();
        for _ in 0..3 {
            obs.extend(truth.iter().copied());
        }
        let mut a = ConeRegistry::new(RegistryConfig::default());
        for &p in &truth {
            a.observe(p, ConeColor::Blue);
        }
        let mut b = a.clone();
        for &p in &obs {
            a.observe(p, ConeColor::Blue);
        }
        for &p in obs.iter().rev() {
            b.observe(p, ConeColor::Blue);
        }
        assert_eq!(a, b);
    }

    #[test]
    fn circle_ordering_follows_angle() {
        let r = 4.0 * 12.0 / (2.0 * std::f64::consts::PI);
        let mut cones: Vec<Vec2> = (0..12).map(|k| Vec2::from_polar(r, k as f64 * std::f64::consts::PI / 6.0)).collect();
        // scramble input order
        cones.swap(1, 7);
        cones.swap(3, 10);
        let start = Pose2D::new(r, -0.5, std::f64::consts::FRAC_PI_2);
        let b = order_cones(&cones, &start);
        assert!(b.closed && !b.gap);
        let angles: Vec<f64> = b.cones.iter().map(|p| p.angle().rem_euclid(2.0 * std::f64::consts::PI)).collect();
        for w in angles.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn collinear_and_isolated() {
        let cones = [Vec2::new(8.0, 0.0), Vec2::new(0.0, 0.0), Vec2::new(4.0, 0.0)];
        let b = order_cones(&cones, &Pose2D::new(-1.0, 0.0, 0.0));
        assert_eq!(b.cones, vec![Vec2::new(0.0, 0.0), Vec2::new(4.0, 0.0), Vec2::new(8.0, 0.0)]);
        assert!(!b.closed && !b.gap);
        let cones = [Vec2::new(0.0, 0.0), Vec2::new(4.0, 0.0), Vec2::new(8.0, 0.0), Vec2::new(18.0, 0.0)];
        let b = order_cones(&cones, &Pose2D::new(-1.0, 0.0, 0.0));
        assert_eq!(b.cones.len(), 3);
        assert!(b.gap);
    }

    #[test]
    fn five_meter_segment_cells() {
        let mut g = OccupancyGrid::new(0.05, Vec2::new(-1.0, -1.0), 200, 40).unwrap();
        rasterize_boundary(&mut g, &[Vec2::new(0.0, 0.0), Vec2::new(5.0, 0.0)], false);
        assert_eq!(g.occupied_count(), 101);
    }

    #[test]
    fn parallel_walls_leave_corridor() {
        let mut cones = Vec::new();
        for i in 0..6 {
            cones.push(Cone::new(4.0 * i as f64, 1.5, ConeColor::Blue));
            cones.push(Cone::new(4.0 * i as f64, -1.5, ConeColor::Yellow));
        }
        let reg = ConeRegistry::from_cones(&cones);
        let g = build_boundary_grid(&reg, 0.1, &Pose2D::new(-1.0, 0.0, 0.0)).unwrap();
        for i in 0..g.cells().len() {
            let c: Cell = g.cell_at(i);
            let p = g.cell_to_world(c);
            if p.y.abs() < 1.4 && (0.0..=20.0).contains(&p.x) {
                assert!(!g.is_occupied(c), "occupied at {p:?}");
            }
        }
    }

    #[test]
    fn single_boundary_is_error() {
        let cones: Vec<Cone> = (0..5).map(|i| Cone::new(4.0 * i as f64, 1.5, ConeColor::Blue)).collect();
        let err = build_boundary_grid(&ConeRegistry::from_cones(&cones), 0.1, &Pose2D::IDENTITY).unwrap_err();
        assert_eq!(err, ConeMapError::TooFewCones { color: ConeColor::Yellow, count: 0 });
    }

    #[test]
    fn ground_truth_track_corridor() {
        for seed in [3, 7, 11] {
            let t = generate_track(&TrackSpec { seed, ..Default::default() }).unwrap();
            let reg = ConeRegistry::from_cones(&t.cones);
            let [blue, yellow] = boundaries(&reg, &t.start_pose).unwrap();
            assert!(blue.closed && yellow.closed);
            assert_eq!(blue.cones.len(), t.cones_of(ConeColor::Blue).len());
            let g = build_boundary_grid(&reg, 0.1, &t.start_pose).unwrap();
            for p in &t.centerline {
                assert!(!g.is_occupied(g.cell_of(*p)), "seed {seed}: centerline blocked at {p:?}");
            }
        }
    }
}
