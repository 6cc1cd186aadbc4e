//! Evaluation metrics: cone map error, pose tracking error, cross-track
//! error, lap times and run aggregation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cone::Cone;
use crate::geometry::{normalize_angle, Pose2D, Vec2};
use crate::path::PathPlan;
use crate::sim::TrajectorySample;

pub const CONE_MATCH_RADIUS: f64 = 1.5;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("ground-truth cone list is empty")]
    EmptyGroundTruth,
    #[error("estimate and ground truth do not overlap in time")]
    NoOverlap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConeRmse {
    /// `None` when nothing matched.
    pub rmse: Option<f64>,
    pub matched: usize,
    pub matched_fraction: f64,
    pub spurious_count: usize,
}

/// Greedy same-color matching by ascending distance (ties by estimate index,
/// then ground-truth index), each cone used at most once.
pub fn cone_map_rmse(est: &[Cone], gt: &[Cone], match_radius: f64) -> Result<ConeRmse, MetricError> {
    if gt.is_empty() {
        return Err(MetricError::EmptyGroundTruth);
    }
    let mut pairs = Vec::new();
    for (i, e) in est.iter().enumerate() {
        for (j, g) in gt.iter().enumerate() {
            if e.color != g.color {
                continue;
            }
            let d = e.position().distance(g.position());
            if d <= match_radius {
                pairs.push((d, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_e = vec![false; est.len()];
    let mut used_g = vec![false; gt.len()];
    let (mut sum, mut n) = (0.0, 0usize);
    for (d, i, j) in pairs {
        if used_e[i] || used_g[j] {
            continue;
        }
        used_e[i] = true;
        used_g[j] = true;
        sum += d * d;
        n += 1;
    }
    Ok(ConeRmse {
        rmse: (n > 0).then(|| (sum / n as f64).sqrt()),
        matched: n,
        matched_fraction: n as f64 / gt.len() as f64,
        spurious_count: est.len() - n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedPose {
    pub t: f64,
    pub pose: Pose2D,
}

impl From<&TrajectorySample> for TimedPose {
    fn from(s: &TrajectorySample) -> Self {
        TimedPose { t: s.t, pose: Pose2D::new(s.x, s.y, s.theta) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackingError {
    pub position_rmse: f64,
    pub heading_rmse: f64,
    pub samples: usize,
}

/// Ground truth interpolated linearly at each estimate time. Estimates
/// outside the ground-truth time range are ignored.
pub fn tracking_error(est: &[TimedPose], gt: &[TimedPose]) -> Result<TrackingError, MetricError> {
    if gt.is_empty() {
        return Err(MetricError::NoOverlap);
    }
    let (t0, t1) = (gt[0].t, gt[gt.len() - 1].t);
    let (mut sp, mut sh, mut n) = (0.0, 0.0, 0usize);
    let mut j = 0;
    for e in est {
        if e.t < t0 - 1e-9 || e.t > t1 + 1e-9 {
            continue;
        }
        while j + 1 < gt.len() && gt[j + 1].t < e.t {
            j += 1;
        }
        let (a, b) = (&gt[j], &gt[(j + 1).min(gt.len() - 1)]);
        let span = b.t - a.t;
        let u = if span > 0.0 { ((e.t - a.t) / span).clamp(0.0, 1.0) } else { 0.0 };
        let p = a.pose.position().lerp(b.pose.position(), u);
        let th = a.pose.theta + u * normalize_angle(b.pose.theta - a.pose.theta);
        sp += e.pose.position().distance(p).powi(2);
        sh += normalize_angle(e.pose.theta - th).powi(2);
        n += 1;
    }
    if n == 0 {
        return Err(MetricError::NoOverlap);
    }
    Ok(TrackingError { position_rmse: (sp / n as f64).sqrt(), heading_rmse: (sh / n as f64).sqrt(), samples: n })
}

pub fn trajectory_rmse(est: &[TimedPose], gt: &[TimedPose]) -> Result<f64, MetricError> {
    tracking_error(est, gt).map(|e| e.position_rmse)
}

/// RMS distance from each sample to the nearest path segment.
pub fn cross_track_rmse(traj: &[Vec2], path: &PathPlan) -> f64 {
    if traj.is_empty() || path.is_empty() {
        return 0.0;
    }
    let s: f64 = traj.iter().map(|p| path.distance_to(*p).powi(2)).sum();
    (s / traj.len() as f64).sqrt()
}

/// Lap durations from start-line crossing times; the first crossing opens lap 1.
pub fn lap_times(crossings: &[f64]) -> Vec<f64> {
    crossings.windows(2).map(|w| w[1] - w[0]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Sample standard deviation; `None` below two values.
    pub std: Option<f64>,
    pub n: usize,
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = (n >= 2).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
    Some(Summary { mean, std, n })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::ConeColor;

    fn c(x: f64, y: f64) -> Cone {
        Cone::new(x, y, ConeColor::Blue)
    }

    #[test]
    fn cone_identity() {
        let gt = vec![c(0.0, 0.0), c(5.0, 0.0), Cone::new(0.0, 3.0, ConeColor::Yellow)];
        let r = cone_map_rmse(&gt, &gt, CONE_MATCH_RADIUS).unwrap();
        assert_eq!(r.rmse, Some(0.0));
        assert_eq!(r.matched_fraction, 1.0);
        assert_eq!(r.spurious_count, 0);
    }

    #[test]
    fn cone_offsets() {
        let gt = vec![c(0.0, 0.0), c(5.0, 0.0)];
        let est = vec![c(0.3, 0.0), c(5.0, 0.4)];
        let r = cone_map_rmse(&est, &gt, CONE_MATCH_RADIUS).unwrap();
        assert!((r.rmse.unwrap() - (0.125f64).sqrt()).abs() < 1e-12);
        assert!((r.rmse.unwrap() - 0.354).abs() < 1e-3);
    }

    #[test]
    fn cone_spurious_and_empty() {
        let gt = vec![c(0.0, 0.0), c(5.0, 0.0)];
        let r = cone_map_rmse(&[c(2.5, 2.0)], &gt, CONE_MATCH_RADIUS).unwrap();
        assert_eq!(r.spurious_count, 1);
        assert_eq!(r.rmse, None);
        assert_eq!(cone_map_rmse(&[], &[], 1.5), Err(MetricError::EmptyGroundTruth));
        // colors never match across
        let r = cone_map_rmse(&[Cone::new(0.0, 0.0, ConeColor::Yellow)], &gt, 1.5).unwrap();
        assert_eq!(r.matched, 0);
    }

    #[test]
    fn cone_tie_break_is_deterministic() {
        let gt = vec![c(-1.0, 0.0), c(1.0, 0.0)];
        let est = vec![c(0.0, 0.0)];
        let r = cone_map_rmse(&est, &gt, 1.5).unwrap();
        assert_eq!(r.matched, 1);
        assert_eq!(r.rmse, Some(1.0));
    }

    fn tp(t: f64, x: f64, y: f64) -> TimedPose {
        TimedPose { t, pose: Pose2D::new(x, y, 0.0) }
    }

    #[test]
    fn trajectory_identities() {
        let gt: Vec<TimedPose> = (0..100).map(|k| tp(k as f64 * 0.01, k as f64 * 0.08, 0.0)).collect();
        assert_eq!(trajectory_rmse(&gt, &gt).unwrap(), 0.0);
        let off: Vec<TimedPose> = gt.iter().map(|p| tp(p.t, p.pose.x + 0.1, p.pose.y)).collect();
        assert!((trajectory_rmse(&off, &gt).unwrap() - 0.1).abs() < 1e-12);
        let late = vec![tp(5.0, 0.0, 0.0)];
        assert_eq!(trajectory_rmse(&late, &gt), Err(MetricError::NoOverlap));
    }

    #[test]
    fn sinusoid_offset() {
        let a = 0.2;
        let gt: Vec<TimedPose> = (0..=1000).map(|k| tp(k as f64 * 0.01, k as f64 * 0.08, 0.0)).collect();
        // 50 Hz estimate, lateral offset a sin(2 pi t), ten whole periods
        let est: Vec<TimedPose> = (0..500)
            .map(|k| {
                let t = k as f64 * 0.02;
                tp(t, t * 8.0, a * (2.0 * std::f64::consts::PI * t).sin())
            })
            .collect();
        let r = trajectory_rmse(&est, &gt).unwrap();
        assert!((r - a / 2f64.sqrt()).abs() < 0.01 * a / 2f64.sqrt(), "{r}");
    }

    #[test]
    fn cross_track() {
        let pts: Vec<Vec2> = (0..=40).map(|k| Vec2::new(k as f64 * 0.25, 0.0)).collect();
        let path = PathPlan::from_positions(&pts, false, 8.0);
        assert_eq!(cross_track_rmse(&pts, &path), 0.0);
        let shifted: Vec<Vec2> = pts.iter().map(|p| Vec2::new(p.x, 0.1)).collect();
        assert!((cross_track_rmse(&shifted, &path) - 0.1).abs() < 1e-12);
        // concentric circles, densely sampled path
        let n = 20000;
        let circle: Vec<Vec2> =
            (0..n).map(|k| Vec2::from_polar(10.0, 2.0 * std::f64::consts::PI * k as f64 / n as f64)).collect();
        let cpath = PathPlan::from_positions(&circle, true, 8.0);
        let traj: Vec<Vec2> = (0..360).map(|k| Vec2::from_polar(10.2, (k as f64).to_radians())).collect();
        assert!((cross_track_rmse(&traj, &cpath) - 0.2).abs() < 1e-3);
    }

    #[test]
    fn laps() {
        assert!(lap_times(&[]).is_empty());
        assert!(lap_times(&[3.0]).is_empty());
        let l = lap_times(&[1.0, 19.24, 37.0]);
        assert_eq!(l.len(), 2);
        assert!((l[0] - 18.24).abs() < 1e-12);
        assert!((145.95f64 / 8.0 - 18.24).abs() < 0.01);
    }

    #[test]
    fn aggregation() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.std.unwrap() - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(summarize(&[2.0]).unwrap().std, None);
        assert!(summarize(&[]).is_none());
    }
}
