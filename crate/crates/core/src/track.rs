//! Rules-compliant cone track generation.
//!
//! Corner waypoints are sampled on a jittered ring, joined with a closed
//! centripetal Catmull-Rom spline, scaled to the requested length and offset
//! by a smooth width profile. Cones are spaced evenly along each boundary
//! below the 5 m limit; four large orange cones mark the start line.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cone::{Cone, ConeColor};
use crate::geometry::{normalize_angle, segment_intersection, Pose2D, Vec2};
use crate::path::{catmull_rom, resample_polyline};

pub const MIN_TRACK_WIDTH: f64 = 3.0;
pub const MAX_TRACK_WIDTH: f64 = 6.0;
pub const MAX_CONE_SPACING: f64 = 5.0;
/// Arc spacing target along each boundary, leaves margin under the rule.
pub const CONE_ARC_SPACING: f64 = 4.5;
pub const CENTERLINE_STEP: f64 = 0.5;
pub const GENERATION_ATTEMPTS: u32 = 20;
/// Tightest centerline radius the generator accepts.
pub const MIN_CENTERLINE_RADIUS: f64 = 6.0;
/// Along-track offset of the orange cones from the start line; a same-side
/// pair stays farther apart than the registry match radius.
pub const ORANGE_OFFSET: f64 = 1.0;
/// Vehicle staging distance behind the start line.
pub const STAGING_DISTANCE: f64 = 4.0;

#[derive(Debug, Error, PartialEq)]
pub enum TrackError {
    #[error("track length hint must be at least 60 m, got {0}")]
    TooShort(f64),
    #[error("track needs at least 2 corners, got {0}")]
    TooFewCorners(u32),
    #[error("no valid track after {attempts} attempts (last failure: {reason})")]
    GenerationFailed { attempts: u32, reason: String },
    #[error("cone index {index} out of range ({len} cones)")]
    ConeIndex { index: usize, len: usize },
    #[error("track invariant violated: {0}")]
    Invariant(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackSpec {
    pub length_hint: f64,
    pub corner_count: u32,
    pub seed: u64,
}

impl Default for TrackSpec {
    fn default() -> Self {
        Self { length_hint: 150.0, corner_count: 6, seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    #[serde(default)]
    pub name: String,
    pub start_pose: Pose2D,
    /// Blue cones in boundary order, then yellow in boundary order, then orange.
    pub cones: Vec<Cone>,
    pub centerline: Vec<Vec2>,
    #[serde(default)]
    pub width_profile: Vec<f64>,
}

impl Track {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("track serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Track> {
        serde_json::from_str(text)
    }

    pub fn cones_of(&self, color: ConeColor) -> Vec<Vec2> {
        self.cones.iter().filter(|c| c.color == color).map(Cone::position).collect()
    }

    /// Closed polyline of one boundary in stored order.
    pub fn boundary(&self, color: ConeColor) -> Vec<Vec2> {
        self.cones_of(color)
    }

    /// All boundary segments (consecutive same-color cones, closing segment included).
    pub fn boundary_segments(&self) -> Vec<(Vec2, Vec2)> {
        let mut segs = Vec::new();
        for color in [ConeColor::Blue, ConeColor::Yellow] {
            let b = self.boundary(color);
            for i in 0..b.len() {
                segs.push((b[i], b[(i + 1) % b.len()]));
            }
        }
        segs
    }

    pub fn centerline_length(&self) -> f64 {
        closed_length(&self.centerline)
    }

    /// Start/finish segment spanning the orange cones, left end first.
    pub fn start_line(&self) -> Option<(Vec2, Vec2)> {
        start_line_from(&self.cones_of(ConeColor::OrangeLarge), &self.start_pose)
    }

    /// Where the car is parked before the first lap: on the centerline, behind the line.
    pub fn staging_pose(&self) -> Pose2D {
        let n = self.centerline.len();
        let back = ((STAGING_DISTANCE / CENTERLINE_STEP).round() as usize).min(n - 1);
        let i = (n - back) % n;
        let p = self.centerline[i];
        let q = self.centerline[(i + 1) % n];
        Pose2D::new(p.x, p.y, (q - p).angle())
    }

    /// Move one cone by `delta`, returning the modified track.
    pub fn displace_cone(&self, index: usize, delta: Vec2) -> Result<Track, TrackError> {
        if index >= self.cones.len() {
            return Err(TrackError::ConeIndex { index, len: self.cones.len() });
        }
        let mut t = self.clone();
        t.cones[index].x += delta.x;
        t.cones[index].y += delta.y;
        Ok(t)
    }

    /// Check every structural invariant.
    pub fn validate(&self) -> Result<(), TrackError> {
        let inv = |m: String| Err(TrackError::Invariant(m));
        if self.centerline.len() < 8 {
            return inv("centerline too short".into());
        }
        if self.width_profile.len() == self.centerline.len() {
            for (i, w) in self.width_profile.iter().enumerate() {
                if !(MIN_TRACK_WIDTH..=MAX_TRACK_WIDTH).contains(w) {
                    return inv(format!("width {w} at centerline point {i}"));
                }
            }
        } else {
            return inv("width profile length mismatch".into());
        }
        if polyline_self_intersects(&self.centerline, true) {
            return inv("centerline self-intersects".into());
        }
        for color in [ConeColor::Blue, ConeColor::Yellow] {
            let b = self.boundary(color);
            if b.len() < 3 {
                return inv(format!("{color:?} boundary has {} cones", b.len()));
            }
            for i in 0..b.len() {
                let d = b[i].distance(b[(i + 1) % b.len()]);
                if d > MAX_CONE_SPACING {
                    return inv(format!("{color:?} cones {i}->{} are {d:.2} m apart", (i + 1) % b.len()));
                }
            }
        }
        let orange = self.cones_of(ConeColor::OrangeLarge);
        if orange.len() != 4 {
            return inv(format!("{} orange cones", orange.len()));
        }
        let quadrants: Vec<(bool, bool)> = orange
            .iter()
            .map(|&p| {
                let local = self.start_pose.inverse_transform_point(p);
                (local.x > 0.0, local.y > 0.0)
            })
            .collect();
        for q in [(true, true), (true, false), (false, true), (false, false)] {
            if !quadrants.contains(&q) {
                return inv("orange cones do not straddle the start pose".into());
            }
        }
        Ok(())
    }
}

pub(crate) fn start_line_from(orange: &[Vec2], start: &Pose2D) -> Option<(Vec2, Vec2)> {
    if orange.len() < 2 {
        return None;
    }
    let lateral = start.heading().perp();
    let mut left = Vec::new();
    let mut right = Vec::new();
    let centroid = orange.iter().fold(Vec2::ZERO, |a, &p| a + p) * (1.0 / orange.len() as f64);
    for &p in orange {
        if (p - centroid).dot(lateral) >= 0.0 {
            left.push(p);
        } else {
            right.push(p);
        }
    }
    if left.is_empty() || right.is_empty() {
        return None;
    }
    let mean = |v: &[Vec2]| v.iter().fold(Vec2::ZERO, |a, &p| a + p) * (1.0 / v.len() as f64);
    Some((mean(&left), mean(&right)))
}

pub(crate) fn closed_length(pts: &[Vec2]) -> f64 {
    (0..pts.len()).map(|i| pts[i].distance(pts[(i + 1) % pts.len()])).sum()
}

fn polyline_self_intersects(pts: &[Vec2], closed: bool) -> bool {
    let n = pts.len();
    let segs = if closed { n } else { n - 1 };
    for i in 0..segs {
        let (a0, a1) = (pts[i], pts[(i + 1) % n]);
        for j in (i + 2)..segs {
            if closed && i == 0 && j == segs - 1 {
                continue;
            }
            let (b0, b1) = (pts[j], pts[(j + 1) % n]);
            if segment_intersection(a0, a1, b0, b1).is_some() {
                return true;
            }
        }
    }
    false
}

fn polylines_intersect(a: &[Vec2], b: &[Vec2]) -> bool {
    for i in 0..a.len() {
        let (a0, a1) = (a[i], a[(i + 1) % a.len()]);
        for j in 0..b.len() {
            if segment_intersection(a0, a1, b[j], b[(j + 1) % b.len()]).is_some() {
                return true;
            }
        }
    }
    false
}

/// Turning-angle curvature of a closed polyline at each vertex.
fn closed_curvature(pts: &[Vec2]) -> Vec<f64> {
    let n = pts.len();
    (0..n)
        .map(|i| {
            let a = pts[i] - pts[(i + n - 1) % n];
            let b = pts[(i + 1) % n] - pts[i];
            normalize_angle(b.angle() - a.angle()) / (0.5 * (a.norm() + b.norm()))
        })
        .collect()
}

/// Generate a track; deterministic for a given spec.
pub fn generate_track(spec: &TrackSpec) -> Result<Track, TrackError> {
    if !(spec.length_hint >= 60.0) {
        return Err(TrackError::TooShort(spec.length_hint));
    }
    if spec.corner_count < 2 {
        return Err(TrackError::TooFewCorners(spec.corner_count));
    }
    let mut reason = String::new();
    for attempt in 0..GENERATION_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(attempt as u64);
        match try_generate(spec, &mut rng) {
            Ok(track) => return Ok(track),
            Err(r) => reason = r,
        }
    }
    Err(TrackError::GenerationFailed { attempts: GENERATION_ATTEMPTS, reason })
}

fn sample_centerline(spec: &TrackSpec, rng: &mut ChaCha8Rng) -> Vec<Vec2> {
    let length = spec.length_hint;
    if spec.corner_count == 2 {
        // stadium: two half circles joined by straights
        let straight_ratio = rng.random_range(0.9..1.5);
        let r = length / (2.0 * PI + 2.0 * straight_ratio);
        let straight = straight_ratio * r;
        let mut pts = Vec::new();
        let n_arc = (PI * r / 0.1).ceil() as usize;
        let n_str = (straight / 0.1).ceil() as usize;
        for k in 0..n_str {
            pts.push(Vec2::new(-straight / 2.0 + straight * k as f64 / n_str as f64, -r));
        }
        for k in 0..n_arc {
            let a = -PI / 2.0 + PI * k as f64 / n_arc as f64;
            pts.push(Vec2::new(straight / 2.0 + r * a.cos(), r * a.sin()));
        }
        for k in 0..n_str {
            pts.push(Vec2::new(straight / 2.0 - straight * k as f64 / n_str as f64, r));
        }
        for k in 0..n_arc {
            let a = PI / 2.0 + PI * k as f64 / n_arc as f64;
            pts.push(Vec2::new(-straight / 2.0 + r * a.cos(), r * a.sin()));
        }
        return resample_polyline(&pts, true, CENTERLINE_STEP);
    }
    let n = spec.corner_count as usize;
    let ring = length / (2.0 * PI);
    let sector = 2.0 * PI / n as f64;
    let waypoints: Vec<Vec2> = (0..n)
        .map(|i| {
            let a = i as f64 * sector + rng.random_range(-0.25..0.25) * sector;
            let r = ring * rng.random_range(0.65..1.3);
            Vec2::from_polar(r, a)
        })
        .collect();
    let dense = catmull_rom(&waypoints, true, 0.05);
    let scale = length / closed_length(&dense);
    let scaled: Vec<Vec2> = dense.iter().map(|&p| p * scale).collect();
    resample_polyline(&scaled, true, CENTERLINE_STEP)
}

fn try_generate(spec: &TrackSpec, rng: &mut ChaCha8Rng) -> Result<Track, String> {
    let raw = sample_centerline(spec, rng);
    let n = raw.len();
    let kappa = closed_curvature(&raw);
    let max_kappa = kappa.iter().fold(0.0f64, |m, k| m.max(k.abs()));
    if max_kappa > 1.0 / MIN_CENTERLINE_RADIUS {
        return Err(format!("centerline radius {:.2} m below {MIN_CENTERLINE_RADIUS} m", 1.0 / max_kappa));
    }

    // start on the straightest stretch: minimum windowed |curvature|
    let window = 10usize.min(n / 4);
    let start = (0..n)
        .min_by(|&a, &b| {
            let score = |i: usize| -> f64 { (0..window).map(|k| kappa[(i + n - window / 2 + k) % n].abs()).sum() };
            score(a).total_cmp(&score(b)).then(a.cmp(&b))
        })
        .unwrap_or(0);
    let mut centerline: Vec<Vec2> = (0..n).map(|i| raw[(start + i) % n]).collect();
    // counter-clockwise driving direction keeps blue on the left
    if signed_area(&centerline) < 0.0 {
        centerline[1..].reverse();
    }

    let length = closed_length(&centerline);
    let waves = rng.random_range(1..=3) as f64;
    let phase = rng.random_range(0.0..2.0 * PI);
    let mean_width = rng.random_range(4.0..4.6);
    let amp = rng.random_range(0.4..0.9);
    let mut s = 0.0;
    let mut width_profile = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            s += centerline[i].distance(centerline[i - 1]);
        }
        let w = mean_width + amp * (2.0 * PI * waves * s / length + phase).sin();
        width_profile.push(w.clamp(MIN_TRACK_WIDTH + 0.2, MAX_TRACK_WIDTH - 0.2));
    }

    let normals: Vec<Vec2> =
        (0..n).map(|i| (centerline[(i + 1) % n] - centerline[(i + n - 1) % n]).normalized().perp()).collect();
    let left: Vec<Vec2> = (0..n).map(|i| centerline[i] + normals[i] * (0.5 * width_profile[i])).collect();
    let right: Vec<Vec2> = (0..n).map(|i| centerline[i] - normals[i] * (0.5 * width_profile[i])).collect();

    if polyline_self_intersects(&centerline, true) {
        return Err("centerline self-intersects".into());
    }
    if polyline_self_intersects(&left, true) || polyline_self_intersects(&right, true) {
        return Err("boundary self-intersects".into());
    }
    if polylines_intersect(&left, &right) {
        return Err("boundaries cross".into());
    }
    // separate track sections must not crowd each other
    for i in 0..n {
        for j in (i + 1)..n {
            let arc = ((j - i).min(n - (j - i))) as f64 * CENTERLINE_STEP;
            if arc < 25.0 {
                continue;
            }
            let clearance = 0.5 * (width_profile[i] + width_profile[j]) + 4.0;
            if centerline[i].distance(centerline[j]) < clearance {
                return Err("track sections too close".into());
            }
        }
    }

    let mut cones = Vec::new();
    for (boundary, color) in [(&left, ConeColor::Blue), (&right, ConeColor::Yellow)] {
        for p in place_cones(boundary) {
            cones.push(Cone::at(p, color));
        }
    }
    let start_pose = Pose2D::new(centerline[0].x, centerline[0].y, normals[0].angle() - PI / 2.0);
    let tangent = start_pose.heading();
    for side in [&left, &right] {
        for sign in [1.0, -1.0] {
            cones.push(Cone::at(side[0] + tangent * (sign * ORANGE_OFFSET), ConeColor::OrangeLarge));
        }
    }

    let track = Track {
        name: format!("gen-{}m-{}c-s{}", spec.length_hint, spec.corner_count, spec.seed),
        start_pose,
        cones,
        centerline,
        width_profile,
    };
    track.validate().map_err(|e| e.to_string())?;
    Ok(track)
}

fn signed_area(pts: &[Vec2]) -> f64 {
    0.5 * (0..pts.len()).map(|i| pts[i].cross(pts[(i + 1) % pts.len()])).sum::<f64>()
}

/// Cone positions at uniform arc spacing ≤ `CONE_ARC_SPACING`, half a spacing
/// off the start vertex so none sits on the start line.
fn place_cones(boundary: &[Vec2]) -> Vec<Vec2> {
    let total = closed_length(boundary);
    let count = (total / CONE_ARC_SPACING).ceil() as usize;
    let spacing = total / count as f64;
    let n = boundary.len();
    let mut out = Vec::with_capacity(count);
    let mut seg = 0;
    let mut seg_start = 0.0;
    for k in 0..count {
        let s = (k as f64 + 0.5) * spacing;
        loop {
            let len = boundary[seg].distance(boundary[(seg + 1) % n]);
            if seg_start + len >= s || seg + 1 == n {
                let t = if len > 0.0 { ((s - seg_start) / len).clamp(0.0, 1.0) } else { 0.0 };
                out.push(boundary[seg].lerp(boundary[(seg + 1) % n], t));
                break;
            }
            seg_start += len;
            seg += 1;
        }
    }
    out
}
