//! Inflated costmap over a boundary grid, exact segment collision checks and
//! the obstacle-aware distance-to-goal table.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::geometry::Vec2;
use crate::grid::{Cell, OccupancyGrid};

/// Worst-case ratio of octile to Euclidean distance.
pub const OCTILE_RATIO: f64 = 1.082_392_200_292_394;

#[derive(Debug, Clone)]
pub struct Costmap {
    resolution: f64,
    origin: Vec2,
    width: usize,
    height: usize,
    /// Distance from each cell centre to the nearest occupied cell centre,
    /// capped at inflation + band.
    dist: Vec<f32>,
    inflation: f64,
    band: f64,
}

impl Costmap {
    pub fn from_grid(grid: &OccupancyGrid, inflation: f64, band: f64) -> Self {
        let res = grid.resolution();
        let (w, h) = (grid.width(), grid.height());
        let cap = inflation + band;
        let mut dist = vec![cap as f32; w * h];
        let reach = (cap / res).ceil() as i64;
        let mut offsets = Vec::new();
        for dy in -reach..=reach {
            for dx in -reach..=reach {
                let d = res * ((dx * dx + dy * dy) as f64).sqrt();
                if d < cap {
                    offsets.push((dx, dy, d as f32));
                }
            }
        }
        for idx in 0..w * h {
            if !grid.is_occupied_index(idx) {
                continue;
            }
            let c = grid.cell_at(idx);
            for &(dx, dy, d) in &offsets {
                let (x, y) = (c.ix + dx, c.iy + dy);
                if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
                    let k = y as usize * w + x as usize;
                    if d < dist[k] {
                        dist[k] = d;
                    }
                }
            }
        }
        Self { resolution: res, origin: grid.origin(), width: w, height: h, dist, inflation, band }
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn inflation(&self) -> f64 {
        self.inflation
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cell_of(&self, p: Vec2) -> Cell {
        Cell {
            ix: ((p.x - self.origin.x) / self.resolution + 1e-9).floor() as i64,
            iy: ((p.y - self.origin.y) / self.resolution + 1e-9).floor() as i64,
        }
    }

    pub fn cell_center(&self, c: Cell) -> Vec2 {
        Vec2::new(
            self.origin.x + (c.ix as f64 + 0.5) * self.resolution,
            self.origin.y + (c.iy as f64 + 0.5) * self.resolution,
        )
    }

    fn index(&self, c: Cell) -> Option<usize> {
        (c.ix >= 0 && c.iy >= 0 && (c.ix as usize) < self.width && (c.iy as usize) < self.height)
            .then(|| c.iy as usize * self.width + c.ix as usize)
    }

    /// Outside the grid counts as lethal.
    pub fn is_lethal_cell(&self, c: Cell) -> bool {
        self.index(c).is_none_or(|i| (self.dist[i] as f64) < self.inflation)
    }

    pub fn is_lethal(&self, p: Vec2) -> bool {
        self.is_lethal_cell(self.cell_of(p))
    }

    /// Soft cost in [0, 1]: 1 at the inflation edge, 0 beyond the band.
    pub fn cost(&self, p: Vec2) -> f64 {
        match self.index(self.cell_of(p)) {
            None => 1.0,
            Some(i) => {
                let d = self.dist[i] as f64;
                if d < self.inflation {
                    1.0
                } else if self.band <= 0.0 {
                    0.0
                } else {
                    (1.0 - (d - self.inflation) / self.band).max(0.0)
                }
            }
        }
    }

    /// Distance from the cell containing `p` to the nearest occupied cell.
    pub fn clearance(&self, p: Vec2) -> f64 {
        self.index(self.cell_of(p)).map_or(0.0, |i| self.dist[i] as f64)
    }

    /// True when no cell touched by the segment is lethal. Cells are visited
    /// with a grid traversal, so every point of the segment is covered.
    pub fn segment_free(&self, a: Vec2, b: Vec2) -> bool {
        let mut free = true;
        self.traverse(a, b, |c| {
            if self.is_lethal_cell(c) {
                free = false;
            }
            free
        });
        free
    }

    pub fn polyline_free(&self, pts: &[Vec2]) -> bool {
        if pts.len() == 1 {
            return !self.is_lethal(pts[0]);
        }
        pts.windows(2).all(|w| self.segment_free(w[0], w[1]))
    }

    fn traverse(&self, a: Vec2, b: Vec2, mut visit: impl FnMut(Cell) -> bool) {
        let res = self.resolution;
        let (ax, ay) = ((a.x - self.origin.x) / res, (a.y - self.origin.y) / res);
        let (bx, by) = ((b.x - self.origin.x) / res, (b.y - self.origin.y) / res);
        let mut c = self.cell_of(a);
        let end = self.cell_of(b);
        if !visit(c) || !visit(end) {
            return;
        }
        let (dx, dy) = (bx - ax, by - ay);
        let step_x: i64 = if dx > 0.0 { 1 } else { -1 };
        let step_y: i64 = if dy > 0.0 { 1 } else { -1 };
        let t_delta_x = if dx != 0.0 { 1.0 / dx.abs() } else { f64::INFINITY };
        let t_delta_y = if dy != 0.0 { 1.0 / dy.abs() } else { f64::INFINITY };
        let mut t_max_x = if dx > 0.0 {
            (c.ix as f64 + 1.0 - ax) * t_delta_x
        } else if dx < 0.0 {
            (ax - c.ix as f64) * t_delta_x
        } else {
            f64::INFINITY
        };
        let mut t_max_y = if dy > 0.0 {
            (c.iy as f64 + 1.0 - ay) * t_delta_y
        } else if dy < 0.0 {
            (ay - c.iy as f64) * t_delta_y
        } else {
            f64::INFINITY
        };
        let limit = (c.ix - end.ix).abs() + (c.iy - end.iy).abs() + 4;
        for _ in 0..limit {
            if c == end || t_max_x.min(t_max_y) > 1.0 {
                break;
            }
            if (t_max_x - t_max_y).abs() < 1e-9 {
                // corner crossing: include both side cells
                if !visit(Cell { ix: c.ix + step_x, iy: c.iy }) || !visit(Cell { ix: c.ix, iy: c.iy + step_y }) {
                    return;
                }
                c = Cell { ix: c.ix + step_x, iy: c.iy + step_y };
                t_max_x += t_delta_x;
                t_max_y += t_delta_y;
            } else if t_max_x < t_max_y {
                c.ix += step_x;
                t_max_x += t_delta_x;
            } else {
                c.iy += step_y;
                t_max_y += t_delta_y;
            }
            if !visit(c) {
                return;
            }
        }
    }

    /// 8-connected Dijkstra distance (metres) over non-lethal cells from the
    /// cell containing `goal`. Unreachable cells are infinite.
    pub fn distance_to(&self, goal: Vec2) -> GoalDistance {
        let n = self.width * self.height;
        let mut d = vec![f64::INFINITY; n];
        let mut heap = BinaryHeap::new();
        if let Some(g) = self.index(self.cell_of(goal)) {
            d[g] = 0.0;
            heap.push(Reverse((0u64, g)));
        }
        let diag = self.resolution * std::f64::consts::SQRT_2;
        let w = self.width as i64;
        let h = self.height as i64;
        while let Some(Reverse((key, i))) = heap.pop() {
            let di = f64::from_bits(key);
            if di > d[i] {
                continue;
            }
            let (x, y) = ((i % self.width) as i64, (i / self.width) as i64);
            for (ox, oy) in [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)] {
                let (nx, ny) = (x + ox, y + oy);
                if nx < 0 || ny < 0 || nx >= w || ny >= h {
                    continue;
                }
                let j = (ny * w + nx) as usize;
                if (self.dist[j] as f64) < self.inflation {
                    continue;
                }
                let nd = di + if ox != 0 && oy != 0 { diag } else { self.resolution };
                if nd < d[j] {
                    d[j] = nd;
                    // non-negative floats order like their bit patterns
                    heap.push(Reverse((nd.to_bits(), j)));
                }
            }
        }
        GoalDistance { dist: d, map: self.clone_header() }
    }

    fn clone_header(&self) -> Costmap {
        Costmap {
            resolution: self.resolution,
            origin: self.origin,
            width: self.width,
            height: self.height,
            dist: Vec::new(),
            inflation: self.inflation,
            band: self.band,
        }
    }
}

/// Table of grid distances to one goal.
#[derive(Debug, Clone)]
pub struct GoalDistance {
    dist: Vec<f64>,
    map: Costmap,
}

impl GoalDistance {
    pub fn at(&self, p: Vec2) -> f64 {
        self.map.index(self.map.cell_of(p)).map_or(f64::INFINITY, |i| self.dist[i])
    }

    /// Lower bound on the length of any collision-free path from `p` to the
    /// goal cell: grid distance deflated by the octile ratio, less the
    /// discretization slack at both ends.
    pub fn lower_bound(&self, p: Vec2) -> f64 {
        let d = self.at(p);
        if d.is_infinite() {
            return f64::INFINITY;
        }
        (d / OCTILE_RATIO - 2.0 * std::f64::consts::SQRT_2 * self.map.resolution).max(0.0)
    }
}
