//! Log-odds occupancy grid, Bresenham traversal and the ASCII map export.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Vec2;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid resolution must be positive and finite, got {0}")]
    BadResolution(f64),
    #[error("grid dimensions must be non-zero, got {width}x{height}")]
    EmptyGrid { width: usize, height: usize },
    #[error("malformed grid file: {0}")]
    Parse(String),
}

/// Integer cell coordinates; `(ix, iy)`, x fastest in storage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub ix: i64,
    pub iy: i64,
}

impl Cell {
    pub const fn new(ix: i64, iy: i64) -> Self {
        Self { ix, iy }
    }
}

/// A world point that falls outside the grid extent. Carries the unclamped
/// cell it would have mapped to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutOfBounds(pub Cell);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogOddsParams {
    pub min: f32,
    pub max: f32,
    pub occupied_threshold: f32,
}

impl Default for LogOddsParams {
    fn default() -> Self {
        Self { min: -4.0, max: 4.0, occupied_threshold: 0.5 }
    }
}

/// Row-major log-odds grid anchored at its minimum-x/minimum-y corner.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    resolution: f64,
    origin: Vec2,
    width: usize,
    height: usize,
    cells: Vec<f32>,
    params: LogOddsParams,
}

impl OccupancyGrid {
    pub fn new(resolution: f64, origin: Vec2, width: usize, height: usize) -> Result<Self, GridError> {
        Self::with_params(resolution, origin, width, height, LogOddsParams::default())
    }

    pub fn with_params(
        resolution: f64,
        origin: Vec2,
        width: usize,
        height: usize,
        params: LogOddsParams,
    ) -> Result<Self, GridError> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(GridError::BadResolution(resolution));
        }
        if width == 0 || height == 0 {
            return Err(GridError::EmptyGrid { width, height });
        }
        Ok(Self { resolution, origin, width, height, cells: vec![0.0; width * height], params })
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn origin(&self) -> Vec2 {
        self.origin
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn params(&self) -> LogOddsParams {
        self.params
    }

    pub fn cells(&self) -> &[f32] {
        &self.cells
    }

    /// World extent `(min, max)` corners.
    pub fn bounds(&self) -> (Vec2, Vec2) {
        let max = self.origin
            + Vec2::new(self.width as f64 * self.resolution, self.height as f64 * self.resolution);
        (self.origin, max)
    }

    /// Unclamped cell of a world point.
    pub fn cell_of(&self, p: Vec2) -> Cell {
        // the epsilon keeps exact multiples of the resolution on their own cell
        Cell::new(
            ((p.x - self.origin.x) / self.resolution + 1e-9).floor() as i64,
            ((p.y - self.origin.y) / self.resolution + 1e-9).floor() as i64,
        )
    }

    pub fn world_to_cell(&self, p: Vec2) -> Result<Cell, OutOfBounds> {
        let c = self.cell_of(p);
        if self.contains(c) {
            Ok(c)
        } else {
            Err(OutOfBounds(c))
        }
    }

    /// Center of a cell in world coordinates.
    pub fn cell_to_world(&self, c: Cell) -> Vec2 {
        Vec2::new(
            self.origin.x + (c.ix as f64 + 0.5) * self.resolution,
            self.origin.y + (c.iy as f64 + 0.5) * self.resolution,
        )
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.ix >= 0 && c.iy >= 0 && (c.ix as usize) < self.width && (c.iy as usize) < self.height
    }

    pub fn index(&self, c: Cell) -> Option<usize> {
        self.contains(c).then(|| c.iy as usize * self.width + c.ix as usize)
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new((index % self.width) as i64, (index / self.width) as i64)
    }

    pub fn log_odds(&self, c: Cell) -> Option<f32> {
        self.index(c).map(|i| self.cells[i])
    }

    pub fn log_odds_at(&self, index: usize) -> f32 {
        self.cells[index]
    }

    /// Add `delta` to a cell's log-odds and clamp. Out-of-range cells are ignored.
    pub fn add_log_odds(&mut self, c: Cell, delta: f32) -> bool {
        match self.index(c) {
            Some(i) => {
                self.cells[i] = (self.cells[i] + delta).clamp(self.params.min, self.params.max);
                true
            }
            None => false,
        }
    }

    pub fn set_log_odds(&mut self, c: Cell, value: f32) -> bool {
        match self.index(c) {
            Some(i) => {
                self.cells[i] = value.clamp(self.params.min, self.params.max);
                true
            }
            None => false,
        }
    }

    pub fn fill(&mut self, value: f32) {
        let v = value.clamp(self.params.min, self.params.max);
        self.cells.iter_mut().for_each(|c| *c = v);
    }

    pub fn is_occupied(&self, c: Cell) -> bool {
        self.log_odds(c).is_some_and(|l| l > self.params.occupied_threshold)
    }

    pub fn is_occupied_index(&self, index: usize) -> bool {
        self.cells[index] > self.params.occupied_threshold
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&l| l > self.params.occupied_threshold).count()
    }

    /// Occupancy probability of a cell, `1 - 1/(1+e^l)`; 0.5 out of bounds.
    pub fn probability(&self, c: Cell) -> f64 {
        self.log_odds(c).map_or(0.5, |l| 1.0 - 1.0 / (1.0 + (l as f64).exp()))
    }

    /// Extend the grid by whole cells on each side, keeping existing cells in place.
    pub fn grow(&mut self, left: usize, right: usize, bottom: usize, top: usize) {
        if left + right + bottom + top == 0 {
            return;
        }
        let nw = self.width + left + right;
        let nh = self.height + bottom + top;
        let mut cells = vec![0.0f32; nw * nh];
        for y in 0..self.height {
            let src = &self.cells[y * self.width..(y + 1) * self.width];
            let dst0 = (y + bottom) * nw + left;
            cells[dst0..dst0 + self.width].copy_from_slice(src);
        }
        self.origin = self.origin
            - Vec2::new(left as f64 * self.resolution, bottom as f64 * self.resolution);
        self.width = nw;
        self.height = nh;
        self.cells = cells;
    }

    /// Grow in blocks of `block` meters until `p` lies inside (with `margin`).
    /// Returns true if the grid changed size.
    pub fn grow_to_include(&mut self, p: Vec2, margin: f64, block: f64) -> bool {
        let block_cells = ((block / self.resolution).round() as usize).max(1);
        let (min, max) = self.bounds();
        let need = |deficit: f64| -> usize {
            if deficit <= 0.0 {
                0
            } else {
                let cells = (deficit / self.resolution).ceil() as usize;
                cells.div_ceil(block_cells) * block_cells
            }
        };
        let left = need(min.x - (p.x - margin));
        let right = need((p.x + margin) - max.x);
        let bottom = need(min.y - (p.y - margin));
        let top = need((p.y + margin) - max.y);
        self.grow(left, right, bottom, top);
        left + right + bottom + top > 0
    }

    /// ASCII export: header comment with resolution and origin, then one row
    /// per line (top row first), values 0 free / 100 occupied / 50 unknown.
    pub fn to_ascii(&self) -> String {
        let mut out = String::with_capacity(self.width * self.height * 3 + 64);
        out.push_str("P2\n");
        let _ = writeln!(out, "# res={} ox={} oy={}", self.resolution, self.origin.x, self.origin.y);
        let _ = writeln!(out, "{} {}", self.width, self.height);
        out.push_str("100\n");
        for y in (0..self.height).rev() {
            let row = &self.cells[y * self.width..(y + 1) * self.width];
            let mut first = true;
            for &l in row {
                if !first {
                    out.push(' ');
                }
                first = false;
                let v = if l > self.params.occupied_threshold {
                    "100"
                } else if l < 0.0 {
                    "0"
                } else {
                    "50"
                };
                out.push_str(v);
            }
            out.push('\n');
        }
        out
    }

    /// Parse the ASCII export. Occupied cells load at max log-odds, free at min.
    pub fn from_ascii(text: &str) -> Result<Self, GridError> {
        let mut res = None;
        let mut ox = None;
        let mut oy = None;
        let mut tokens: Vec<&str> = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if let Some(comment) = line.strip_prefix('#') {
                for kv in comment.split_whitespace() {
                    if let Some((k, v)) = kv.split_once('=') {
                        let v: f64 = v.parse().map_err(|_| GridError::Parse(format!("bad {k}")))?;
                        match k {
                            "res" => res = Some(v),
                            "ox" => ox = Some(v),
                            "oy" => oy = Some(v),
                            _ => {}
                        }
                    }
                }
            } else if !line.is_empty() {
                tokens.extend(line.split_whitespace());
            }
        }
        let mut it = tokens.into_iter();
        if it.next() != Some("P2") {
            return Err(GridError::Parse("missing P2 magic".into()));
        }
        let mut num = || -> Result<usize, GridError> {
            it.next()
                .ok_or_else(|| GridError::Parse("truncated".into()))?
                .parse()
                .map_err(|_| GridError::Parse("bad integer".into()))
        };
        let width = num()?;
        let height = num()?;
        let _maxval = num()?;
        let res = res.ok_or_else(|| GridError::Parse("missing res".into()))?;
        let origin = Vec2::new(ox.unwrap_or(0.0), oy.unwrap_or(0.0));
        let mut grid = Self::new(res, origin, width, height)?;
        let params = grid.params;
        for y in (0..height).rev() {
            for x in 0..width {
                let v = num()?;
                grid.cells[y * width + x] = match v {
                    100 => params.max,
                    0 => params.min,
                    _ => 0.0,
                };
            }
        }
        Ok(grid)
    }
}

/// All cells on the Bresenham line from `a` to `b`, both endpoints included.
pub fn bresenham(a: Cell, b: Cell) -> Vec<Cell> {
    let mut out = Vec::with_capacity(((b.ix - a.ix).abs().max((b.iy - a.iy).abs()) + 1) as usize);
    bresenham_for_each(a, b, |c| out.push(c));
    out
}

pub fn bresenham_for_each(a: Cell, b: Cell, mut f: impl FnMut(Cell)) {
    let dx = (b.ix - a.ix).abs();
    let dy = -(b.iy - a.iy).abs();
    let sx = if a.ix < b.ix { 1 } else { -1 };
    let sy = if a.iy < b.iy { 1 } else { -1 };
    let mut err = dx + dy;
    let (mut x, mut y) = (a.ix, a.iy);
    loop {
        f(Cell::new(x, y));
        if x == b.ix && y == b.iy {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid10() -> OccupancyGrid {
        OccupancyGrid::new(0.05, Vec2::ZERO, 10, 10).unwrap()
    }

    #[test]
    fn world_to_cell_examples() {
        let g = grid10();
        assert_eq!(g.world_to_cell(Vec2::new(0.0, 0.0)), Ok(Cell::new(0, 0)));
        // floor(0.26/0.05)=5, floor(0.09/0.05)=1
        assert_eq!(g.world_to_cell(Vec2::new(0.26, 0.09)), Ok(Cell::new(5, 1)));
        assert_eq!(g.world_to_cell(Vec2::new(0.6, 0.0)), Err(OutOfBounds(Cell::new(12, 0))));
        assert!(g.world_to_cell(Vec2::new(-0.01, 0.0)).is_err());
    }

    #[test]
    fn cell_round_trip_every_cell() {
        let g = OccupancyGrid::new(0.05, Vec2::new(-3.2, 1.7), 73, 41).unwrap();
        for iy in 0..41 {
            for ix in 0..73 {
                let c = Cell::new(ix, iy);
                let w = g.cell_to_world(c);
                assert_eq!(g.world_to_cell(w), Ok(c));
            }
        }
    }

    #[test]
    fn invalid_construction() {
        assert!(matches!(OccupancyGrid::new(0.0, Vec2::ZERO, 1, 1), Err(GridError::BadResolution(_))));
        assert!(matches!(OccupancyGrid::new(0.1, Vec2::ZERO, 0, 1), Err(GridError::EmptyGrid { .. })));
    }

    #[test]
    fn log_odds_clamped() {
        let mut g = grid10();
        let c = Cell::new(3, 3);
        for _ in 0..20 {
            g.add_log_odds(c, 0.85);
        }
        assert_eq!(g.log_odds(c), Some(4.0));
        for _ in 0..40 {
            g.add_log_odds(c, -0.4);
        }
        assert_eq!(g.log_odds(c), Some(-4.0));
        assert!(!g.add_log_odds(Cell::new(-1, 0), 1.0));
    }

    #[test]
    fn grow_preserves_cells_and_world_positions() {
        let mut g = grid10();
        let c = Cell::new(2, 7);
        g.set_log_odds(c, 3.0);
        let w = g.cell_to_world(c);
        g.grow(4, 1, 2, 3);
        assert_eq!(g.width(), 15);
        assert_eq!(g.height(), 15);
        assert_eq!(g.cells().len(), 15 * 15);
        let c2 = g.world_to_cell(w).unwrap();
        assert_eq!(g.log_odds(c2), Some(3.0));
        assert!(g.grow_to_include(Vec2::new(3.0, 0.0), 0.0, 1.0));
        assert_eq!(g.cells().len(), g.width() * g.height());
        assert!(g.world_to_cell(Vec2::new(3.0, 0.0)).is_ok());
    }

    /// DDA enumeration: count cells a segment sweeps when it is axis-dominant.
    fn dominant_axis_count(a: Cell, b: Cell) -> usize {
        ((b.ix - a.ix).abs().max((b.iy - a.iy).abs()) + 1) as usize
    }

    #[test]
    fn bresenham_counts() {
        for (a, b) in [
            (Cell::new(0, 0), Cell::new(20, 0)),
            (Cell::new(0, 0), Cell::new(100, 0)),
            (Cell::new(5, 5), Cell::new(-7, 12)),
            (Cell::new(0, 0), Cell::new(13, 13)),
            (Cell::new(3, -2), Cell::new(3, -2)),
        ] {
            let cells = bresenham(a, b);
            assert_eq!(cells.len(), dominant_axis_count(a, b));
            assert_eq!(cells[0], a);
            assert_eq!(*cells.last().unwrap(), b);
            for w in cells.windows(2) {
                assert!((w[0].ix - w[1].ix).abs() <= 1 && (w[0].iy - w[1].iy).abs() <= 1);
            }
        }
    }

    #[test]
    fn ascii_round_trip() {
        let mut g = OccupancyGrid::new(0.1, Vec2::new(-1.5, 2.0), 4, 3).unwrap();
        g.set_log_odds(Cell::new(0, 0), 4.0);
        g.set_log_odds(Cell::new(3, 2), -2.0);
        let text = g.to_ascii();
        assert!(text.contains("# res=0.1 ox=-1.5 oy=2"));
        let back = OccupancyGrid::from_ascii(&text).unwrap();
        assert_eq!(back.width(), 4);
        assert_eq!(back.origin(), g.origin());
        assert!(back.is_occupied(Cell::new(0, 0)));
        assert_eq!(back.log_odds(Cell::new(3, 2)), Some(-4.0));
        assert_eq!(back.log_odds(Cell::new(1, 1)), Some(0.0));
        assert_eq!(back.to_ascii(), text);
    }
}
