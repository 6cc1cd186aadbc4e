//! Planned paths: ordered waypoints with heading, curvature and target speed.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{normalize_angle, point_segment_distance, Vec2};

pub const DEFAULT_MAX_STEP: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathPoint {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub curvature: f64,
    pub target_speed: f64,
}

impl PathPoint {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

#[derive(Debug, Error)]
pub enum PathError {
    #[error("path csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("path needs at least {needed} points, got {got}")]
    TooShort { needed: usize, got: usize },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PathPlan {
    pub points: Vec<PathPoint>,
    pub closed: bool,
}

impl PathPlan {
    pub fn new(points: Vec<PathPoint>, closed: bool) -> Self {
        Self { points, closed }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec2> {
        self.points.iter().map(PathPoint::position).collect()
    }

    /// Number of segments, counting the closing segment of a closed path.
    pub fn segment_count(&self) -> usize {
        match self.points.len() {
            0 | 1 => 0,
            n if self.closed => n,
            n => n - 1,
        }
    }

    /// Endpoints of segment `i` (wrapping on closed paths).
    pub fn segment(&self, i: usize) -> (Vec2, Vec2) {
        let n = self.points.len();
        (self.points[i].position(), self.points[(i + 1) % n].position())
    }

    pub fn length(&self) -> f64 {
        (0..self.segment_count())
            .map(|i| {
                let (a, b) = self.segment(i);
                a.distance(b)
            })
            .sum()
    }

    /// Longest segment, including the closing one.
    pub fn max_step(&self) -> f64 {
        (0..self.segment_count())
            .map(|i| {
                let (a, b) = self.segment(i);
                a.distance(b)
            })
            .fold(0.0, f64::max)
    }

    /// Nearest segment to `p`: `(segment index, distance, projection parameter)`.
    pub fn nearest_segment(&self, p: Vec2) -> Option<(usize, f64, f64)> {
        if self.points.len() == 1 {
            return Some((0, self.points[0].position().distance(p), 0.0));
        }
        let mut best: Option<(usize, f64, f64)> = None;
        for i in 0..self.segment_count() {
            let (a, b) = self.segment(i);
            let (d, t) = point_segment_distance(p, a, b);
            if best.is_none_or(|(_, bd, _)| d < bd) {
                best = Some((i, d, t));
            }
        }
        best
    }

    pub fn distance_to(&self, p: Vec2) -> f64 {
        self.nearest_segment(p).map_or(f64::INFINITY, |(_, d, _)| d)
    }

    pub fn max_abs_curvature(&self) -> f64 {
        self.points.iter().map(|p| p.curvature.abs()).fold(0.0, f64::max)
    }

    /// Build a path from positions: headings from central differences, curvature
    /// from the turning angle over the local arc.
    pub fn from_positions(pts: &[Vec2], closed: bool, target_speed: f64) -> PathPlan {
        let n = pts.len();
        let mut points = Vec::with_capacity(n);
        for i in 0..n {
            let (prev, next) = neighbours(pts, i, closed);
            let heading = match (prev, next) {
                (Some(p), Some(q)) => (pts[q] - pts[p]).angle(),
                (None, Some(q)) => (pts[q] - pts[i]).angle(),
                (Some(p), None) => (pts[i] - pts[p]).angle(),
                (None, None) => 0.0,
            };
            let curvature = match (prev, next) {
                (Some(p), Some(q)) => {
                    let a = pts[i] - pts[p];
                    let b = pts[q] - pts[i];
                    let turn = normalize_angle(b.angle() - a.angle());
                    let arc = 0.5 * (a.norm() + b.norm());
                    if arc > 1e-9 {
                        turn / arc
                    } else {
                        0.0
                    }
                }
                _ => 0.0,
            };
            points.push(PathPoint { x: pts[i].x, y: pts[i].y, heading, curvature, target_speed });
        }
        PathPlan { points, closed }
    }

    /// Export as `s,x,y,heading,curvature,target_speed`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,x,y,heading,curvature,target_speed\n");
        let mut s = 0.0;
        for (i, p) in self.points.iter().enumerate() {
            if i > 0 {
                s += self.points[i - 1].position().distance(p.position());
            }
            let _ = writeln!(out, "{s:.6},{:.6},{:.6},{:.6},{:.6},{:.6}", p.x, p.y, p.heading, p.curvature, p.target_speed);
        }
        out
    }

    /// Parse the CSV export. The closed flag is inferred from the endpoint gap.
    pub fn from_csv(text: &str) -> Result<PathPlan, PathError> {
        #[derive(Deserialize)]
        struct Row {
            #[allow(dead_code)]
            s: f64,
            x: f64,
            y: f64,
            heading: f64,
            curvature: f64,
            target_speed: f64,
        }
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let mut points = Vec::new();
        for row in rdr.deserialize() {
            let r: Row = row?;
            points.push(PathPoint { x: r.x, y: r.y, heading: r.heading, curvature: r.curvature, target_speed: r.target_speed });
        }
        let closed = points.len() > 2
            && points[0].position().distance(points[points.len() - 1].position()) <= DEFAULT_MAX_STEP + 1e-9;
        Ok(PathPlan { points, closed })
    }
}

fn neighbours(pts: &[Vec2], i: usize, closed: bool) -> (Option<usize>, Option<usize>) {
    let n = pts.len();
    if n < 2 {
        return (None, None);
    }
    let prev = if i > 0 { Some(i - 1) } else if closed { Some(n - 1) } else { None };
    let next = if i + 1 < n { Some(i + 1) } else if closed { Some(0) } else { None };
    (prev, next)
}

/// Resample a polyline at uniform arc spacing no larger than `max_step`.
/// For closed polylines the closing segment is included and the output does
/// not repeat the first point.
pub fn resample_polyline(pts: &[Vec2], closed: bool, max_step: f64) -> Vec<Vec2> {
    if pts.len() < 2 {
        return pts.to_vec();
    }
    let mut verts = pts.to_vec();
    if closed {
        verts.push(pts[0]);
    }
    let mut cum = vec![0.0];
    for w in verts.windows(2) {
        cum.push(cum.last().unwrap() + w[0].distance(w[1]));
    }
    let total = *cum.last().unwrap();
    if total <= 0.0 {
        return vec![pts[0]];
    }
    let n = (total / max_step).ceil().max(1.0) as usize;
    let step = total / n as f64;
    let count = if closed { n } else { n + 1 };
    let mut out = Vec::with_capacity(count);
    let mut seg = 0;
    for k in 0..count {
        let s = (k as f64 * step).min(total);
        while seg + 1 < cum.len() - 1 && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let t = if len > 0.0 { (s - cum[seg]) / len } else { 0.0 };
        out.push(verts[seg].lerp(verts[seg + 1], t));
    }
    out
}

/// Sample a centripetal Catmull-Rom spline through `pts` at roughly `step` spacing.
pub fn catmull_rom(pts: &[Vec2], closed: bool, step: f64) -> Vec<Vec2> {
    let n = pts.len();
    if n < 3 {
        return pts.to_vec();
    }
    let get = |i: isize| -> Vec2 {
        if closed {
            pts[i.rem_euclid(n as isize) as usize]
        } else if i < 0 {
            pts[0] * 2.0 - pts[1]
        } else if i as usize >= n {
            pts[n - 1] * 2.0 - pts[n - 2]
        } else {
            pts[i as usize]
        }
    };
    let segments = if closed { n } else { n - 1 };
    let mut out = Vec::new();
    for i in 0..segments as isize {
        let (p0, p1, p2, p3) = (get(i - 1), get(i), get(i + 1), get(i + 2));
        let knot = |a: Vec2, b: Vec2| a.distance(b).sqrt().max(1e-6);
        let t0 = 0.0;
        let t1 = t0 + knot(p0, p1);
        let t2 = t1 + knot(p1, p2);
        let t3 = t2 + knot(p2, p3);
        let samples = ((p1.distance(p2) / step).ceil() as usize).max(1);
        for k in 0..samples {
            let t = t1 + (t2 - t1) * k as f64 / samples as f64;
            let a1 = p0 * ((t1 - t) / (t1 - t0)) + p1 * ((t - t0) / (t1 - t0));
            let a2 = p1 * ((t2 - t) / (t2 - t1)) + p2 * ((t - t1) / (t2 - t1));
            let a3 = p2 * ((t3 - t) / (t3 - t2)) + p3 * ((t - t2) / (t3 - t2));
            let b1 = a1 * ((t2 - t) / (t2 - t0)) + a2 * ((t - t0) / (t2 - t0));
            let b2 = a2 * ((t3 - t) / (t3 - t1)) + a3 * ((t - t1) / (t3 - t1));
            out.push(b1 * ((t2 - t) / (t2 - t1)) + b2 * ((t - t1) / (t2 - t1)));
        }
    }
    if !closed {
        out.push(pts[n - 1]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn resample_respects_max_step() {
        let pts = [Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0), Vec2::new(10.0, 3.3)];
        let open = resample_polyline(&pts, false, 0.25);
        assert_eq!(open[0], pts[0]);
        assert_abs_diff_eq!(open.last().unwrap().y, 3.3, epsilon = 1e-9);
        let plan = PathPlan::from_positions(&open, false, 8.0);
        assert!(plan.max_step() <= 0.25 + 1e-9);
        let closed = resample_polyline(&pts, true, 0.25);
        let plan = PathPlan::from_positions(&closed, true, 8.0);
        assert!(plan.max_step() <= 0.25 + 1e-9);
        // corners are cut by at most one step
        let full = 10.0 + 3.3 + (100.0f64 + 3.3 * 3.3).sqrt();
        assert!(plan.length() <= full + 1e-9 && plan.length() > full - 3.0 * 0.25);
    }

    #[test]
    fn circle_curvature_from_positions() {
        let n = 400;
        let pts: Vec<Vec2> = (0..n)
            .map(|i| Vec2::from_polar(10.0, 2.0 * std::f64::consts::PI * i as f64 / n as f64))
            .collect();
        let plan = PathPlan::from_positions(&pts, true, 8.0);
        for p in &plan.points {
            assert_abs_diff_eq!(p.curvature, 0.1, epsilon = 1e-4);
        }
    }

    #[test]
    fn csv_round_trip() {
        let pts: Vec<Vec2> = (0..10).map(|i| Vec2::new(i as f64 * 0.2, 0.0)).collect();
        let plan = PathPlan::from_positions(&pts, false, 5.0);
        let back = PathPlan::from_csv(&plan.to_csv()).unwrap();
        assert_eq!(back.len(), 10);
        assert!(!back.closed);
        assert_abs_diff_eq!(back.points[9].x, 1.8, epsilon = 1e-6);
    }

    #[test]
    fn catmull_rom_passes_through_knots() {
        let pts = [Vec2::new(0.0, 0.0), Vec2::new(4.0, 1.0), Vec2::new(8.0, 0.0), Vec2::new(12.0, 2.0)];
        let s = catmull_rom(&pts, false, 0.5);
        for p in &pts {
            assert!(s.iter().any(|q| q.distance(*p) < 1e-9));
        }
    }
}
