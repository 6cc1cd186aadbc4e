//! Overlay plots: ground truth against the estimate, as plain SVG.

use std::fmt::Write as _;

use crate::cone::{Cone, ConeColor};
use crate::geometry::Vec2;
use crate::path::PathPlan;

const SCALE: f64 = 5.0;
const MARGIN: f64 = 5.0;

fn fill(c: ConeColor) -> &'static str {
    match c {
        ConeColor::Blue => "#1f4fd1",
        ConeColor::Yellow => "#e0b400",
        ConeColor::OrangeLarge => "#f07000",
    }
}

struct Frame {
    min: Vec2,
    max: Vec2,
}

impl Frame {
    fn around<'a>(pts: impl Iterator<Item = &'a Vec2>) -> Self {
        let mut min = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in pts {
            min = Vec2::new(min.x.min(p.x), min.y.min(p.y));
            max = Vec2::new(max.x.max(p.x), max.y.max(p.y));
        }
        if !min.is_finite() {
            min = Vec2::ZERO;
            max = Vec2::new(1.0, 1.0);
        }
        Self { min: min - Vec2::new(MARGIN, MARGIN), max: max + Vec2::new(MARGIN, MARGIN) }
    }

    /// y is flipped so the plot reads like a map.
    fn map(&self, p: Vec2) -> (f64, f64) {
        ((p.x - self.min.x) * SCALE, (self.max.y - p.y) * SCALE)
    }

    fn size(&self) -> (f64, f64) {
        ((self.max.x - self.min.x) * SCALE, (self.max.y - self.min.y) * SCALE)
    }
}

fn polyline(out: &mut String, f: &Frame, pts: &[Vec2], stroke: &str, width: f64, extra: &str) {
    if pts.len() < 2 {
        return;
    }
    let _ = write!(out, "<polyline fill=\"none\" stroke=\"{stroke}\" stroke-width=\"{width}\"{extra} points=\"");
    for (i, p) in pts.iter().enumerate() {
        let (x, y) = f.map(*p);
        let sep = if i == 0 { "" } else { " " };
        let _ = write!(out, "{sep}{x:.2},{y:.2}");
    }
    out.push_str("\"/>\n");
}

/// Ground-truth cones (filled), estimated cones (rings), planned path,
/// ground-truth trajectory and estimated trajectory.
pub fn overlay_svg(gt_cones: &[Cone], est_cones: &[Cone], path: Option<&PathPlan>, truth: &[Vec2], estimate: &[Vec2]) -> String {
    let all: Vec<Vec2> = gt_cones.iter().map(Cone::position).chain(truth.iter().copied()).collect();
    let f = Frame::around(all.iter());
    let (w, h) = f.size();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.2} {h:.2}\">"
    );
    out.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");
    if let Some(p) = path {
        let mut pts = p.positions();
        if p.closed && !pts.is_empty() {
            pts.push(pts[0]);
        }
        polyline(&mut out, &f, &pts, "#2a9d3a", 1.5, " stroke-dasharray=\"4 3\"");
    }
    polyline(&mut out, &f, truth, "black", 1.0, "");
    polyline(&mut out, &f, estimate, "#d62828", 1.0, " stroke-opacity=\"0.8\"");
    for c in gt_cones {
        let (x, y) = f.map(c.position());
        let _ = writeln!(out, "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"1.5\" fill=\"{}\"/>", fill(c.color));
    }
    for c in est_cones {
        let (x, y) = f.map(c.position());
        let _ = writeln!(
            out,
            "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"none\" stroke=\"{}\" stroke-width=\"0.8\"/>",
            fill(c.color)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stable_and_well_formed() {
        let cones = vec![Cone::new(0.0, 0.0, ConeColor::Blue), Cone::new(10.0, 4.0, ConeColor::Yellow)];
        let traj = vec![Vec2::new(0.0, 1.0), Vec2::new(5.0, 2.0)];
        let a = overlay_svg(&cones, &cones, None, &traj, &traj);
        assert_eq!(a, overlay_svg(&cones, &cones, None, &traj, &traj));
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert_eq!(a.matches("<circle").count(), 4);
        assert_eq!(a.matches("<polyline").count(), 2);
        // top-left margin maps to the origin, y flipped
        assert!(a.contains("cx=\"25.00\" cy=\"45.00\""));
    }
}
