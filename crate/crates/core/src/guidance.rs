//! Path tracking: pure pursuit and its curvature-regulated variant.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::geometry::{Pose2D, Vec2};
use crate::path::PathPlan;
use crate::vehicle::{ControlCommand, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GuidanceConfig {
    pub lookahead: f64,
    pub target_speed: f64,
    pub reg_min_radius: f64,
    pub reg_min_speed: f64,
    pub wheelbase: f64,
    pub max_steer: f64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self { lookahead: 2.5, target_speed: 8.0, reg_min_radius: 4.0, reg_min_speed: 2.0, wheelbase: 1.55, max_steer: 0.4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Controller {
    #[default]
    PurePursuit,
    Regulated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lookahead {
    /// Target in the vehicle frame.
    pub local: Vec2,
    pub world: Vec2,
    /// Open path ran out before the lookahead distance.
    pub at_end: bool,
    /// Segment holding the target.
    pub segment: usize,
    /// Distance from the vehicle to the nearest path segment.
    pub cross_track: f64,
    pub nearest_segment: usize,
}

/// Root of |a + s (b - a) - p| = r with s in [0, 1], taking the far side.
fn circle_exit(p: Vec2, a: Vec2, b: Vec2, r: f64) -> Option<f64> {
    let d = b - a;
    let f = a - p;
    let qa = d.dot(d);
    if qa < 1e-18 {
        return None;
    }
    let qb = 2.0 * f.dot(d);
    let qc = f.dot(f) - r * r;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return None;
    }
    let s = (-qb + disc.sqrt()) / (2.0 * qa);
    (0.0..=1.0).contains(&s).then_some(s)
}

/// Target point `l_d` ahead: starting from the projection onto the nearest
/// segment, the first point along the path at distance `l_d` from the vehicle.
/// When the vehicle is farther than `l_d` from the path the target is `l_d`
/// of arc past the projection instead.
pub fn lookahead_point(path: &PathPlan, pose: &Pose2D, l_d: f64) -> Option<Lookahead> {
    let p = pose.position();
    let (seg0, cross, t0) = path.nearest_segment(p)?;
    let nseg = path.segment_count();
    let finish = |world: Vec2, segment: usize, at_end: bool| Lookahead {
        local: pose.inverse_transform_point(world),
        world,
        at_end,
        segment,
        cross_track: cross,
        nearest_segment: seg0,
    };
    if nseg == 0 {
        return Some(finish(path.points[0].position(), 0, true));
    }
    let (a0, b0) = path.segment(seg0);
    let start = a0.lerp(b0, t0);
    if cross >= l_d {
        // walk arc length instead
        let mut rem = l_d;
        let (mut a, mut seg) = (start, seg0);
        for _ in 0..=nseg {
            let b = path.segment(seg).1;
            let len = a.distance(b);
            if len >= rem {
                return Some(finish(a.lerp(b, rem / len), seg, false));
            }
            rem -= len;
            if !path.closed && seg + 1 >= nseg {
                return Some(finish(b, seg, true));
            }
            seg = (seg + 1) % nseg;
            a = path.segment(seg).0;
        }
        return Some(finish(a, seg, false));
    }
    let mut seg = seg0;
    let mut a = start;
    for _ in 0..=nseg {
        let b = path.segment(seg).1;
        if let Some(s) = circle_exit(p, a, b, l_d) {
            return Some(finish(a.lerp(b, s), seg, false));
        }
        if !path.closed && seg + 1 >= nseg {
            return Some(finish(b, seg, true));
        }
        seg = (seg + 1) % nseg;
        a = path.segment(seg).0;
    }
    Some(finish(a, seg, false))
}

/// Curvature of the circle through the origin, tangent to +x, through `pt`.
pub fn pursuit_curvature(pt: Vec2) -> f64 {
    let d2 = pt.norm_squared();
    if d2 < 1e-12 {
        0.0
    } else {
        2.0 * pt.y / d2
    }
}

pub fn steer_for_curvature(kappa: f64, cfg: &GuidanceConfig) -> f64 {
    (cfg.wheelbase * kappa).atan().clamp(-cfg.max_steer, cfg.max_steer)
}

/// Speed regulated by the pursuit curvature.
pub fn regulated_speed(kappa: f64, cfg: &GuidanceConfig) -> f64 {
    let r = if kappa.abs() < 1e-12 { f64::INFINITY } else { 1.0 / kappa.abs() };
    (cfg.target_speed * (r / cfg.reg_min_radius).min(1.0)).max(cfg.reg_min_speed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidanceOutput {
    pub cmd: ControlCommand,
    pub kappa: f64,
    pub lookahead: Lookahead,
}

pub fn pure_pursuit_step(state: &VehicleState, path: &PathPlan, cfg: &GuidanceConfig) -> Option<GuidanceOutput> {
    let la = lookahead_point(path, &state.pose, cfg.lookahead)?;
    let kappa = pursuit_curvature(la.local);
    Some(GuidanceOutput {
        cmd: ControlCommand { steer: steer_for_curvature(kappa, cfg), target_speed: cfg.target_speed },
        kappa,
        lookahead: la,
    })
}

pub fn regulated_pure_pursuit_step(state: &VehicleState, path: &PathPlan, cfg: &GuidanceConfig) -> Option<GuidanceOutput> {
    let mut out = pure_pursuit_step(state, path, cfg)?;
    let n = path.points.len();
    let cap = path.points[out.lookahead.nearest_segment % n]
        .target_speed
        .min(path.points[out.lookahead.segment % n].target_speed);
    out.cmd.target_speed = regulated_speed(out.kappa, cfg).min(cap);
    Some(out)
}

pub fn guidance_step(
    controller: Controller,
    state: &VehicleState,
    path: &PathPlan,
    cfg: &GuidanceConfig,
) -> Option<GuidanceOutput> {
    match controller {
        Controller::PurePursuit => pure_pursuit_step(state, path, cfg),
        Controller::Regulated => regulated_pure_pursuit_step(state, path, cfg),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlLogRow {
    pub t: f64,
    pub steer_cmd: f64,
    pub speed_cmd: f64,
    pub cross_track_error: f64,
    pub lookahead_x: f64,
    pub lookahead_y: f64,
}

pub fn control_log_to_csv(rows: &[ControlLogRow]) -> String {
    let mut out = String::from("t,steer_cmd,speed_cmd,cross_track_error,lookahead_x,lookahead_y\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{:.2},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.t, r.steer_cmd, r.speed_cmd, r.cross_track_error, r.lookahead_x, r.lookahead_y
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vehicle::{step_vehicle, VehicleParams};
    use proptest::prelude::*;

    fn straight() -> PathPlan {
        let pts: Vec<Vec2> = (0..=80).map(|k| Vec2::new(k as f64 * 0.25, 0.0)).collect();
        PathPlan::from_positions(&pts, false, 8.0)
    }

    fn circle(r: f64) -> PathPlan {
        let n = (2.0 * std::f64::consts::PI * r / 0.25).round() as usize;
        let pts: Vec<Vec2> =
            (0..n).map(|k| Vec2::from_polar(r, 2.0 * std::f64::consts::PI * k as f64 / n as f64)).collect();
        PathPlan::from_positions(&pts, true, 8.0)
    }

    #[test]
    fn lookahead_examples() {
        let la = lookahead_point(&straight(), &Pose2D::IDENTITY, 2.5).unwrap();
        assert!((la.local - Vec2::new(2.5, 0.0)).norm() < 1e-9);
        let la = lookahead_point(&straight(), &Pose2D::new(0.0, 1.0, 0.0), 2.5).unwrap();
        let expect = Vec2::new((2.5f64 * 2.5 - 1.0).sqrt(), -1.0);
        assert!((la.local - expect).norm() < 1e-9, "{:?}", la.local);
        assert!((la.local.x - 2.29).abs() < 0.005);
    }

    #[test]
    fn lookahead_wraps_and_ends() {
        let c = circle(10.0);
        // just before the seam, moving counter-clockwise
        let pose = Pose2D::new(10.0 * (-0.05f64).cos(), 10.0 * (-0.05f64).sin(), std::f64::consts::FRAC_PI_2);
        let la = lookahead_point(&c, &pose, 2.5).unwrap();
        assert!(!la.at_end);
        assert!(la.world.y > 0.0 && la.segment < 20, "{la:?}");
        let la = lookahead_point(&straight(), &Pose2D::new(19.0, 0.0, 0.0), 2.5).unwrap();
        assert!(la.at_end);
        assert_eq!(la.world, Vec2::new(20.0, 0.0));
    }

    #[test]
    fn curvature_examples() {
        assert_eq!(pursuit_curvature(Vec2::new(2.5, 0.0)), 0.0);
        assert!((pursuit_curvature(Vec2::new(0.0, 2.5)) - 0.8).abs() < 1e-12);
        assert!((pursuit_curvature(Vec2::new(2.0, 1.5)) - 0.48).abs() < 1e-12);
        assert_eq!(steer_for_curvature(0.0, &GuidanceConfig::default()), 0.0);
    }

    #[test]
    fn regulation_examples() {
        let cfg = GuidanceConfig::default();
        assert_eq!(regulated_speed(0.0, &cfg), 8.0);
        assert!((regulated_speed(0.8, &cfg) - 2.5).abs() < 1e-12);
        assert_eq!(regulated_speed(0.2, &cfg), 8.0);
        assert_eq!(regulated_speed(10.0, &cfg), 2.0);
    }

    proptest! {
        #[test]
        fn curvature_matches_tangent_circle(x in -10.0..10.0f64, y in -10.0..10.0f64) {
            prop_assume!(x * x + y * y > 1e-4 && y.abs() > 1e-6);
            // centre (0, c) with c^2 = x^2 + (y - c)^2
            let c = (x * x + y * y) / (2.0 * y);
            let k = pursuit_curvature(Vec2::new(x, y));
            prop_assert!((k - 1.0 / c).abs() < 1e-9);
        }

        #[test]
        fn regulated_speed_monotone(k1 in 0.0..5.0f64, k2 in 0.0..5.0f64) {
            let cfg = GuidanceConfig::default();
            let (lo, hi) = if k1 < k2 { (k1, k2) } else { (k2, k1) };
            prop_assert!(regulated_speed(hi, &cfg) <= regulated_speed(lo, &cfg));
            prop_assert!(regulated_speed(hi, &cfg) >= cfg.reg_min_speed);
            prop_assert!(regulated_speed(-hi, &cfg) == regulated_speed(hi, &cfg));
        }
    }

    fn closed_loop_error(controller: Controller) -> f64 {
        let path = circle(20.0);
        let cfg = GuidanceConfig::default();
        let vp = VehicleParams::default();
        let mut s = VehicleState::at_rest(Pose2D::new(20.0, 0.0, std::f64::consts::FRAC_PI_2));
        let mut cmd = ControlCommand::stop();
        let mut worst: f64 = 0.0;
        for k in 0..3000 {
            if k % 2 == 0 {
                cmd = guidance_step(controller, &s, &path, &cfg).unwrap().cmd;
            }
            s = step_vehicle(&s, &cmd, 0.01, &vp);
            if k > 1500 {
                worst = worst.max((s.pose.position().norm() - 20.0).abs());
            }
        }
        worst
    }

    #[test]
    fn circle_steady_state() {
        assert!(closed_loop_error(Controller::PurePursuit) < 0.2);
        assert!(closed_loop_error(Controller::Regulated) < 0.2);
    }

    #[test]
    fn regulated_honours_path_speed() {
        let mut p = straight();
        for pt in &mut p.points {
            pt.target_speed = 5.0;
        }
        let s = VehicleState::at_rest(Pose2D::IDENTITY);
        let cfg = GuidanceConfig::default();
        assert_eq!(regulated_pure_pursuit_step(&s, &p, &cfg).unwrap().cmd.target_speed, 5.0);
        assert_eq!(pure_pursuit_step(&s, &p, &cfg).unwrap().cmd.target_speed, 8.0);
    }
}
