//! EKF landmark SLAM over cone detections.
//!
//! Range-bearing observations, greedy gated nearest-neighbour association and
//! no loop closure: a matched update only moves the vehicle and the observed
//! landmark (Schmidt partial update), so unobserved landmarks are never
//! corrected after the fact.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix2x3, Matrix3, Vector2};
use serde::{Deserialize, Serialize};

use crate::cone::{Cone, ConeColor};
use crate::estimator::OdometryEstimate;
use crate::geometry::{normalize_angle, Pose2D, Vec2};
use crate::sensors::{ConeDetection, SensorFrame};

const KNOWN_START_SIGMA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OdometryMode {
    /// Predict only on GNSS samples from position deltas and IMU heading.
    RawIns,
    /// Predict from the fused 50 Hz odometry.
    Fused,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LandmarkSlamConfig {
    pub mode: OdometryMode,
    /// Chi-square gate on the squared innovation distance.
    pub assoc_gate: f64,
    pub range_sigma: f64,
    pub bearing_sigma: f64,
    pub gnss_sigma: f64,
    pub heading_sigma: f64,
    /// Fused-mode odometry noise: base plus a fraction of the motion.
    pub odom_trans_base: f64,
    pub odom_trans_scale: f64,
    pub odom_rot_base: f64,
    pub odom_rot_scale: f64,
    pub init_sigma: [f64; 3],
}

impl Default for LandmarkSlamConfig {
    fn default() -> Self {
        Self {
            mode: OdometryMode::Fused,
            assoc_gate: 9.21,
            range_sigma: 0.1,
            bearing_sigma: 0.02,
            gnss_sigma: 0.25,
            heading_sigma: 0.01,
            odom_trans_base: 0.005,
            odom_trans_scale: 0.05,
            odom_rot_base: 0.002,
            odom_rot_scale: 0.05,
            init_sigma: [0.25, 0.25, 0.02],
        }
    }
}

impl LandmarkSlamConfig {
    pub fn measurement_cov(&self) -> Matrix2<f64> {
        Matrix2::new(self.range_sigma.powi(2), 0.0, 0.0, self.bearing_sigma.powi(2))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSlamState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub landmark_colors: Vec<ConeColor>,
}

impl LandmarkSlamState {
    pub fn new(pose: Pose2D, pose_cov: Matrix3<f64>) -> Self {
        let mut cov = DMatrix::zeros(3, 3);
        cov.view_mut((0, 0), (3, 3)).copy_from(&pose_cov);
        Self { mean: DVector::from_vec(vec![pose.x, pose.y, pose.theta]), cov, landmark_colors: Vec::new() }
    }

    pub fn landmark_count(&self) -> usize {
        self.landmark_colors.len()
    }

    pub fn pose(&self) -> Pose2D {
        Pose2D::new(self.mean[0], self.mean[1], self.mean[2])
    }

    pub fn landmark(&self, i: usize) -> Vec2 {
        Vec2::new(self.mean[3 + 2 * i], self.mean[4 + 2 * i])
    }

    fn pose_cov(&self) -> Matrix3<f64> {
        self.cov.fixed_view::<3, 3>(0, 0).into_owned()
    }
}

/// Range-bearing prediction with Jacobians w.r.t. pose and landmark.
pub fn observe(pose: &Pose2D, lm: Vec2) -> (Vector2<f64>, Matrix2x3<f64>, Matrix2<f64>) {
    let dx = lm.x - pose.x;
    let dy = lm.y - pose.y;
    let q = dx * dx + dy * dy;
    let r = q.sqrt();
    let z = Vector2::new(r, normalize_angle(dy.atan2(dx) - pose.theta));
    let hv = Matrix2x3::new(-dx / r, -dy / r, 0.0, dy / q, -dx / q, -1.0);
    let hl = Matrix2::new(dx / r, dy / r, -dy / q, dx / q);
    (z, hv, hl)
}

/// Jacobians of `pose ⊕ delta` w.r.t. pose and delta.
pub fn compose_jacobians(pose: &Pose2D, delta: &Pose2D) -> (Matrix3<f64>, Matrix3<f64>) {
    let (s, c) = pose.theta.sin_cos();
    let fx = Matrix3::new(
        1.0, 0.0, -delta.x * s - delta.y * c,
        0.0, 1.0, delta.x * c - delta.y * s,
        0.0, 0.0, 1.0,
    );
    let fu = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
    (fx, fu)
}

pub fn lm_predict(s: &mut LandmarkSlamState, delta: &Pose2D, dp: &Matrix3<f64>) {
    let pose = s.pose();
    let (fx, fu) = compose_jacobians(&pose, delta);
    let next = pose.compose(delta);
    s.mean[0] = next.x;
    s.mean[1] = next.y;
    s.mean[2] = next.theta;
    let n = s.cov.nrows();
    let pvv = s.pose_cov();
    let new_vv = fx * pvv * fx.transpose() + fu * dp * fu.transpose();
    if n > 3 {
        let pvl = s.cov.view((0, 3), (3, n - 3)).into_owned();
        let new_vl = fx * pvl;
        s.cov.view_mut((0, 3), (3, n - 3)).copy_from(&new_vl);
        s.cov.view_mut((3, 0), (n - 3, 3)).copy_from(&new_vl.transpose());
    }
    s.cov.view_mut((0, 0), (3, 3)).copy_from(&((new_vv + new_vv.transpose()) * 0.5));
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Association {
    Matched { index: usize, d2: f64 },
    NewLandmark,
}

fn innovation(s: &LandmarkSlamState, det: &ConeDetection, j: usize, r: &Matrix2<f64>) -> (Vector2<f64>, Matrix2<f64>, Matrix2x3<f64>, Matrix2<f64>) {
    let pose = s.pose();
    let (zhat, hv, hl) = observe(&pose, s.landmark(j));
    let nu = Vector2::new(det.range - zhat[0], normalize_angle(det.bearing - zhat[1]));
    let lj = 3 + 2 * j;
    let pvv = s.pose_cov();
    let pvl: Matrix3x2 = s.cov.fixed_view::<3, 2>(0, lj).into_owned();
    let pll: Matrix2<f64> = s.cov.fixed_view::<2, 2>(lj, lj).into_owned();
    let hvpvl = hv * pvl * hl.transpose();
    let innov = hv * pvv * hv.transpose() + hvpvl + hvpvl.transpose() + hl * pll * hl.transpose() + r;
    (nu, innov, hv, hl)
}

type Matrix3x2 = nalgebra::Matrix3x2<f64>;

/// Best colour-consistent landmark under the gate, or a new landmark.
pub fn lm_associate(s: &LandmarkSlamState, det: &ConeDetection, r: &Matrix2<f64>, gate: f64) -> Association {
    let pose = s.pose();
    let world = pose.transform_point(det.local_position());
    let mut best: Option<(usize, f64)> = None;
    for j in 0..s.landmark_count() {
        if s.landmark_colors[j] != det.color {
            continue;
        }
        // cheap prefilter well outside any plausible gate
        if s.landmark(j).distance(world) > 4.0 {
            continue;
        }
        let (nu, innov, _, _) = innovation(s, det, j, r);
        let Some(inv) = innov.try_inverse() else { continue };
        let d2 = (nu.transpose() * inv * nu)[(0, 0)];
        if d2 < gate && best.is_none_or(|(_, bd)| d2 < bd) {
            best = Some((j, d2));
        }
    }
    match best {
        Some((index, d2)) => Association::Matched { index, d2 },
        None => Association::NewLandmark,
    }
}

pub fn lm_update(s: &mut LandmarkSlamState, det: &ConeDetection, assoc: Association, r: &Matrix2<f64>) {
    match assoc {
        Association::Matched { index, .. } => schmidt_update(s, det, index, r),
        Association::NewLandmark => augment(s, det, r),
    }
}

fn schmidt_update(s: &mut LandmarkSlamState, det: &ConeDetection, j: usize, r: &Matrix2<f64>) {
    let (nu, innov, hv, hl) = innovation(s, det, j, r);
    let Some(inv) = innov.try_inverse() else { return };
    let n = s.cov.nrows();
    let lj = 3 + 2 * j;
    // M = P Hᵀ, touching only the pose and landmark columns
    let pv = s.cov.columns(0, 3).into_owned();
    let pl = s.cov.columns(lj, 2).into_owned();
    let m: DMatrix<f64> = &pv * DMatrix::from_column_slice(3, 2, hv.transpose().as_slice())
        + &pl * DMatrix::from_column_slice(2, 2, hl.transpose().as_slice());
    let inv_d = DMatrix::from_column_slice(2, 2, inv.as_slice());
    let active = [0usize, 1, 2, lj, lj + 1];
    // gain restricted to the active rows
    let mut ks = DMatrix::<f64>::zeros(n, 2);
    for &i in &active {
        let row = m.row(i) * &inv_d;
        ks.set_row(i, &row);
    }
    let nu_d = DVector::from_column_slice(nu.as_slice());
    let dx = &ks * &nu_d;
    for &i in &active {
        s.mean[i] += dx[i];
    }
    s.mean[2] = normalize_angle(s.mean[2]);

    // P' = P - Ks Mᵀ - M Ksᵀ + Ks S Ksᵀ; rows/cols outside the active set keep P
    let innov_d = DMatrix::from_column_slice(2, 2, innov.as_slice());
    let ks_a = DMatrix::from_fn(5, 2, |a, c| ks[(active[a], c)]);
    let kskt = &ks_a * &innov_d * ks_a.transpose();
    let kmt = &ks_a * m.transpose(); // 5 × n
    for (a, &i) in active.iter().enumerate() {
        for col in 0..n {
            s.cov[(i, col)] -= kmt[(a, col)];
            s.cov[(col, i)] -= kmt[(a, col)];
        }
    }
    for (a, &i) in active.iter().enumerate() {
        for (b, &k) in active.iter().enumerate() {
            s.cov[(i, k)] += kskt[(a, b)];
        }
    }
    for &i in &active {
        for col in 0..n {
            let v = 0.5 * (s.cov[(i, col)] + s.cov[(col, i)]);
            s.cov[(i, col)] = v;
            s.cov[(col, i)] = v;
        }
    }
}

/// Landmark initialization Jacobians w.r.t. pose and measurement.
pub fn augment_jacobians(pose: &Pose2D, det: &ConeDetection) -> (Matrix2x3<f64>, Matrix2<f64>) {
    let a = pose.theta + det.bearing;
    let (sa, ca) = a.sin_cos();
    let gv = Matrix2x3::new(1.0, 0.0, -det.range * sa, 0.0, 1.0, det.range * ca);
    let gz = Matrix2::new(ca, -det.range * sa, sa, det.range * ca);
    (gv, gz)
}

fn augment(s: &mut LandmarkSlamState, det: &ConeDetection, r: &Matrix2<f64>) {
    let pose = s.pose();
    let lm = pose.transform_point(det.local_position());
    let (gv, gz) = augment_jacobians(&pose, det);
    let n = s.cov.nrows();
    let pvx = s.cov.rows(0, 3).into_owned(); // 3 × n
    let gv_d = DMatrix::from_column_slice(2, 3, gv.as_slice());
    let cross = &gv_d * &pvx; // 2 × n
    let pll = gv * s.pose_cov() * gv.transpose() + gz * r * gz.transpose();
    let mut cov = DMatrix::zeros(n + 2, n + 2);
    cov.view_mut((0, 0), (n, n)).copy_from(&s.cov);
    cov.view_mut((n, 0), (2, n)).copy_from(&cross);
    cov.view_mut((0, n), (n, 2)).copy_from(&cross.transpose());
    cov.view_mut((n, n), (2, 2)).copy_from(&((pll + pll.transpose()) * 0.5));
    s.cov = cov;
    let mut mean = s.mean.clone().resize_vertically(n + 2, 0.0);
    mean[n] = lm.x;
    mean[n + 1] = lm.y;
    s.mean = mean;
    s.landmark_colors.push(det.color);
}

pub fn lm_extract(s: &LandmarkSlamState) -> (Vec<Cone>, Pose2D) {
    let cones = (0..s.landmark_count()).map(|i| Cone::at(s.landmark(i), s.landmark_colors[i])).collect();
    (cones, s.pose())
}

/// Streaming landmark SLAM driven by sensor frames and fused odometry.
#[derive(Debug, Clone)]
pub struct LandmarkSlam {
    cfg: LandmarkSlamConfig,
    state: Option<LandmarkSlamState>,
    last_gnss: Option<(Vec2, f64)>,
    last_odom: Option<Pose2D>,
    stamp: f64,
    matched: u64,
    added: u64,
}

impl LandmarkSlam {
    pub fn new(cfg: LandmarkSlamConfig) -> Self {
        Self { cfg, state: None, last_gnss: None, last_odom: None, stamp: 0.0, matched: 0, added: 0 }
    }

    /// Start at a known pose; the first odometry sample only sets the reference.
    pub fn with_initial(cfg: LandmarkSlamConfig, start: Pose2D, t: f64) -> Self {
        let mut s = Self::new(cfg);
        s.init_with(start, t, [KNOWN_START_SIGMA, KNOWN_START_SIGMA, KNOWN_START_SIGMA * 0.1]);
        s
    }

    pub fn config(&self) -> &LandmarkSlamConfig {
        &self.cfg
    }

    pub fn state(&self) -> Option<&LandmarkSlamState> {
        self.state.as_ref()
    }

    /// Current pose estimate and the time it refers to.
    pub fn pose(&self) -> Option<(Pose2D, f64)> {
        self.state.as_ref().map(|s| (s.pose(), self.stamp))
    }

    pub fn counts(&self) -> (u64, u64) {
        (self.matched, self.added)
    }

    fn init(&mut self, pose: Pose2D, t: f64) {
        let [sx, sy, st] = self.cfg.init_sigma;
        self.init_with(pose, t, [sx, sy, st]);
    }

    fn init_with(&mut self, pose: Pose2D, t: f64, [sx, sy, st]: [f64; 3]) {
        let cov = Matrix3::from_diagonal(&nalgebra::Vector3::new(sx * sx, sy * sy, st * st));
        self.state = Some(LandmarkSlamState::new(pose, cov));
        self.stamp = t;
    }

    fn predict_raw(&mut self, frame: &SensorFrame) {
        let (Some(g), Some(imu)) = (frame.gnss, frame.imu) else { return };
        if let Some((pg, pth)) = self.last_gnss {
            let delta_world = g - pg;
            let local = delta_world.rotate(-pth);
            let delta = Pose2D::new(local.x, local.y, imu.theta - pth);
            let gv = 2.0 * self.cfg.gnss_sigma.powi(2);
            let dp = Matrix3::from_diagonal(&nalgebra::Vector3::new(gv, gv, 2.0 * self.cfg.heading_sigma.powi(2)));
            if let Some(s) = self.state.as_mut() {
                lm_predict(s, &delta, &dp);
            }
            self.stamp = frame.t;
        } else if self.state.is_none() {
            self.init(Pose2D::new(g.x, g.y, imu.theta), frame.t);
        }
        self.last_gnss = Some((g, imu.theta));
    }

    fn predict_fused(&mut self, odom: &[OdometryEstimate]) {
        for o in odom {
            if let Some(prev) = self.last_odom {
                let delta = prev.between(&o.pose);
                let c = &self.cfg;
                let st = c.odom_trans_base + c.odom_trans_scale * delta.position().norm();
                let sr = c.odom_rot_base + c.odom_rot_scale * delta.theta.abs();
                let dp = Matrix3::from_diagonal(&nalgebra::Vector3::new(st * st, st * st, sr * sr));
                if let Some(s) = self.state.as_mut() {
                    lm_predict(s, &delta, &dp);
                }
            } else if self.state.is_none() {
                self.init(o.pose, o.t);
            }
            self.stamp = o.t;
            self.last_odom = Some(o.pose);
        }
    }

    /// Advance with one frame and the odometry outputs produced for it.
    pub fn process(&mut self, frame: &SensorFrame, odom: &[OdometryEstimate]) {
        match self.cfg.mode {
            OdometryMode::RawIns => {
                // the filter cycles at the INS rate; detections between fixes have no pose
                if frame.gnss.is_none() {
                    return;
                }
                self.predict_raw(frame)
            }
            OdometryMode::Fused => self.predict_fused(odom),
        }
        let Some(dets) = frame.cone_detections.as_ref() else { return };
        let r = self.cfg.measurement_cov();
        let gate = self.cfg.assoc_gate;
        let Some(s) = self.state.as_mut() else { return };
        for det in dets {
            let assoc = lm_associate(s, det, &r, gate);
            match assoc {
                Association::Matched { .. } => self.matched += 1,
                Association::NewLandmark => self.added += 1,
            }
            lm_update(s, det, assoc, &r);
        }
    }

    pub fn extract(&self) -> (Vec<Cone>, Option<Pose2D>) {
        match &self.state {
            Some(s) => {
                let (c, p) = lm_extract(s);
                (c, Some(p))
            }
            None => (Vec::new(), None),
        }
    }
}
